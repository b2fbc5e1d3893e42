//! Canonical hereditarily finite sets.
//!
//! Every set lives in a [`SetStore`] and is referred to by a copyable [`HfSet`]
//! handle. The store hash-conses member lists, so two handles from the same
//! store are equal exactly when the sets they denote are equal. Members are
//! kept sorted by ascending Ackermann code, which makes the canonical printed
//! form and the canonical order on sets the same thing.
//!
//! ## Threading
//!
//! A store is `Send` but not `Sync`: Ackermann codes are cached lazily through
//! interior mutability, so a store is confined to one thread of control at a
//! time. Parallel workers each build their own store; handles must never be
//! mixed between stores.

use std::cell::OnceCell;
use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

/// Handle to a set interned in a [`SetStore`].
///
/// Equality of handles is equality of sets. The handle deliberately has no
/// `Ord` impl: the canonical order is [`SetStore::cmp`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct HfSet(u32);

impl HfSet {
    /// Raw index inside the owning store.
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Size limits for materialising sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Caps {
    /// Largest `n` for which `V_n` may be built.
    pub max_stage: usize,
    /// Largest `k` such that a power set of a `k`-element set may be built.
    pub max_powerset_log2: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            max_stage: 5,
            max_powerset_log2: 16,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("stage V_{requested} exceeds the configured cap V_{cap}")]
    StageCap { requested: usize, cap: usize },
    #[error("power set of a {size}-element set exceeds the budget of 2^{cap} elements")]
    PowersetCap { size: usize, cap: usize },
    #[error("Ackermann code too large to materialise (member code does not fit in 64 bits)")]
    CodeTooLarge,
}

/// Error from the set-literal reader.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("set literal syntax error at byte {offset}: {message}")]
pub struct SetSyntaxError {
    pub offset: usize,
    pub message: String,
}

struct Node {
    members: Box<[HfSet]>,
    rank: u32,
    code: OnceCell<BigUint>,
}

/// Interning table for hereditarily finite sets. Insert-only.
pub struct SetStore {
    nodes: Vec<Node>,
    index: HashMap<Box<[HfSet]>, HfSet>,
    stages: Vec<HfSet>,
    caps: Caps,
}

impl Default for SetStore {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for SetStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SetStore")
            .field("sets", &self.nodes.len())
            .field("caps", &self.caps)
            .finish()
    }
}

impl SetStore {
    pub fn new() -> Self {
        Self::with_caps(Caps::default())
    }

    pub fn with_caps(caps: Caps) -> Self {
        let mut store = SetStore {
            nodes: Vec::new(),
            index: HashMap::new(),
            stages: Vec::new(),
            caps,
        };
        let empty = store.intern_sorted(Vec::new());
        store.stages.push(empty);
        store
    }

    pub fn caps(&self) -> Caps {
        self.caps
    }

    /// Number of distinct sets interned so far.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn empty(&self) -> HfSet {
        HfSet(0)
    }

    /// Members in canonical (ascending Ackermann code) order.
    pub fn members(&self, s: HfSet) -> &[HfSet] {
        &self.nodes[s.index()].members
    }

    /// Cardinality.
    pub fn card(&self, s: HfSet) -> usize {
        self.nodes[s.index()].members.len()
    }

    /// `rank(∅) = 0`, `rank(s) = 1 + max rank of a member`.
    pub fn rank(&self, s: HfSet) -> usize {
        self.nodes[s.index()].rank as usize
    }

    /// Canonical order: ascending Ackermann code, computed without building codes.
    ///
    /// Sets of smaller rank always have smaller codes, since `V_n` is coded by
    /// exactly `0..|V_n|`. Within a rank the comparison walks both member lists
    /// from the top, like comparing binary numerals from the high bit.
    pub fn cmp(&self, a: HfSet, b: HfSet) -> Ordering {
        if a == b {
            return Ordering::Equal;
        }
        let by_rank = self.rank(a).cmp(&self.rank(b));
        if by_rank != Ordering::Equal {
            return by_rank;
        }
        let (ma, mb) = (self.members(a), self.members(b));
        for (x, y) in ma.iter().rev().zip(mb.iter().rev()) {
            if x != y {
                return self.cmp(*x, *y);
            }
        }
        ma.len().cmp(&mb.len())
    }

    /// `x ∈ s`.
    pub fn contains(&self, s: HfSet, x: HfSet) -> bool {
        if self.rank(x) >= self.rank(s) {
            return false;
        }
        self.members(s)
            .binary_search_by(|m| self.cmp(*m, x))
            .is_ok()
    }

    pub fn is_subset(&self, a: HfSet, b: HfSet) -> bool {
        self.members(a).iter().all(|x| self.contains(b, *x))
    }

    /// Canonical constructor: duplicates are dropped and members sorted.
    pub fn make_set<I: IntoIterator<Item = HfSet>>(&mut self, elements: I) -> HfSet {
        let mut members: Vec<HfSet> = elements.into_iter().collect();
        members.sort_by(|a, b| self.cmp(*a, *b));
        members.dedup();
        self.intern_sorted(members)
    }

    /// Interns a member list that is already strictly ascending.
    fn intern_sorted(&mut self, members: Vec<HfSet>) -> HfSet {
        debug_assert!(members
            .windows(2)
            .all(|w| self.cmp(w[0], w[1]) == Ordering::Less));
        if let Some(&h) = self.index.get(members.as_slice()) {
            return h;
        }
        let rank = members.last().map_or(0, |m| self.nodes[m.index()].rank + 1);
        let handle = HfSet(u32::try_from(self.nodes.len()).expect("set store overflow"));
        let members = members.into_boxed_slice();
        self.nodes.push(Node {
            members: members.clone(),
            rank,
            code: OnceCell::new(),
        });
        self.index.insert(members, handle);
        handle
    }

    /// Looks up a set without inserting it.
    pub fn find(&self, members: &[HfSet]) -> Option<HfSet> {
        let mut sorted = members.to_vec();
        sorted.sort_by(|a, b| self.cmp(*a, *b));
        sorted.dedup();
        self.index.get(sorted.as_slice()).copied()
    }

    pub fn singleton(&mut self, x: HfSet) -> HfSet {
        self.intern_sorted(vec![x])
    }

    pub fn union(&mut self, a: HfSet, b: HfSet) -> HfSet {
        let elems: Vec<HfSet> = self
            .members(a)
            .iter()
            .chain(self.members(b))
            .copied()
            .collect();
        self.make_set(elems)
    }

    /// `x ∪ {x}`.
    pub fn successor(&mut self, x: HfSet) -> HfSet {
        let mut elems = self.members(x).to_vec();
        elems.push(x);
        self.make_set(elems)
    }

    /// The von Neumann numeral for `n`.
    pub fn numeral(&mut self, n: usize) -> HfSet {
        let mut s = self.empty();
        for _ in 0..n {
            s = self.successor(s);
        }
        s
    }

    /// `{{a},{a,b}}`.
    pub fn kuratowski_pair(&mut self, a: HfSet, b: HfSet) -> HfSet {
        let sa = self.singleton(a);
        let sab = self.make_set([a, b]);
        self.make_set([sa, sab])
    }

    /// Splits a Kuratowski pair into its components.
    pub fn unpair(&self, p: HfSet) -> Option<(HfSet, HfSet)> {
        match self.members(p) {
            [only] => match self.members(*only) {
                [a] => Some((*a, *a)),
                _ => None,
            },
            [x, y] => {
                let (single, double) = match (self.card(*x), self.card(*y)) {
                    (1, 2) => (*x, *y),
                    (2, 1) => (*y, *x),
                    _ => return None,
                };
                let a = self.members(single)[0];
                let rest = self.members(double);
                if !rest.contains(&a) {
                    return None;
                }
                let b = if rest[0] == a { rest[1] } else { rest[0] };
                Some((a, b))
            }
            _ => None,
        }
    }

    /// The set of all subsets of `s`, or a capacity error.
    pub fn powerset(&mut self, s: HfSet) -> Result<HfSet, KernelError> {
        let n = self.card(s);
        if n > self.caps.max_powerset_log2 {
            return Err(KernelError::PowersetCap {
                size: n,
                cap: self.caps.max_powerset_log2,
            });
        }
        let base = self.members(s).to_vec();
        // Members are ascending by code, so the subset picked by a bitmask is
        // already sorted, and subsets come out in code order as masks increase.
        let mut subsets = Vec::with_capacity(1 << n);
        for mask in 0u64..(1u64 << n) {
            let chosen: Vec<HfSet> = base
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, m)| *m)
                .collect();
            subsets.push(self.intern_sorted(chosen));
        }
        Ok(self.intern_sorted(subsets))
    }

    /// `V_0 = ∅`, `V_{n+1} = P(V_n)`.
    pub fn v_stage(&mut self, n: usize) -> Result<HfSet, KernelError> {
        if n > self.caps.max_stage {
            return Err(KernelError::StageCap {
                requested: n,
                cap: self.caps.max_stage,
            });
        }
        while self.stages.len() <= n {
            let last = *self.stages.last().expect("V_0 is always present");
            let next = self.powerset(last)?;
            self.stages.push(next);
        }
        Ok(self.stages[n])
    }

    pub fn is_transitive(&self, s: HfSet) -> bool {
        self.members(s)
            .iter()
            .all(|m| self.members(*m).iter().all(|x| self.contains(s, *x)))
    }

    /// Smallest transitive superset of `s`.
    pub fn transitive_closure(&mut self, s: HfSet) -> HfSet {
        let mut seen = std::collections::HashSet::new();
        let mut stack: Vec<HfSet> = self.members(s).to_vec();
        let mut out = Vec::new();
        while let Some(x) = stack.pop() {
            if seen.insert(x) {
                out.push(x);
                stack.extend_from_slice(self.members(x));
            }
        }
        self.make_set(out)
    }

    /// `code(s) = Σ_{e ∈ s} 2^code(e)`, cached per set.
    pub fn ackermann_code(&self, s: HfSet) -> Result<&BigUint, KernelError> {
        let cell = &self.nodes[s.index()].code;
        if let Some(code) = cell.get() {
            return Ok(code);
        }
        let mut code = BigUint::zero();
        for m in self.members(s) {
            let bit = self.ackermann_code(*m)?.to_u64().ok_or(KernelError::CodeTooLarge)?;
            code.set_bit(bit, true);
        }
        Ok(cell.get_or_init(|| code))
    }

    /// Inverse of [`SetStore::ackermann_code`].
    pub fn ackermann_decode(&mut self, n: &BigUint) -> HfSet {
        let bits = n.bits();
        let members: Vec<HfSet> = (0..bits)
            .filter(|&i| n.bit(i))
            .map(|i| self.ackermann_decode(&BigUint::from(i)))
            .collect();
        self.make_set(members)
    }

    pub fn decode_u64(&mut self, n: u64) -> HfSet {
        self.ackermann_decode(&BigUint::from(n))
    }

    /// Reads a set literal such as `{{},{{}}}`. Whitespace is ignored.
    pub fn parse_set(&mut self, text: &str) -> Result<HfSet, SetSyntaxError> {
        let bytes = text.as_bytes();
        let mut pos = 0;
        let set = self.parse_set_at(bytes, &mut pos)?;
        skip_ws(bytes, &mut pos);
        if pos != bytes.len() {
            return Err(SetSyntaxError {
                offset: pos,
                message: "trailing input after set literal".into(),
            });
        }
        Ok(set)
    }

    /// Parses one set literal starting at `*pos`, advancing past it.
    pub(crate) fn parse_set_at(
        &mut self,
        bytes: &[u8],
        pos: &mut usize,
    ) -> Result<HfSet, SetSyntaxError> {
        // Iterative to keep deep literals off the call stack.
        let mut open: Vec<(usize, Vec<HfSet>)> = Vec::new();
        loop {
            skip_ws(bytes, pos);
            match bytes.get(*pos) {
                Some(b'{') => {
                    open.push((*pos, Vec::new()));
                    *pos += 1;
                    skip_ws(bytes, pos);
                    if bytes.get(*pos) == Some(&b'}') {
                        continue;
                    }
                    if bytes.get(*pos) == Some(&b'{') {
                        continue;
                    }
                    return Err(SetSyntaxError {
                        offset: *pos,
                        message: "expected '{' or '}'".into(),
                    });
                }
                Some(b'}') if !open.is_empty() => {
                    *pos += 1;
                    let (_, elems) = open.pop().expect("checked non-empty");
                    let set = self.make_set(elems);
                    match open.last_mut() {
                        None => return Ok(set),
                        Some((_, parent)) => {
                            parent.push(set);
                            skip_ws(bytes, pos);
                            match bytes.get(*pos) {
                                Some(b',') => {
                                    *pos += 1;
                                    skip_ws(bytes, pos);
                                    if bytes.get(*pos) != Some(&b'{') {
                                        return Err(SetSyntaxError {
                                            offset: *pos,
                                            message: "expected '{' after ','".into(),
                                        });
                                    }
                                }
                                Some(b'}') => {}
                                _ => {
                                    return Err(SetSyntaxError {
                                        offset: *pos,
                                        message: "expected ',' or '}'".into(),
                                    })
                                }
                            }
                        }
                    }
                }
                Some(_) => {
                    return Err(SetSyntaxError {
                        offset: *pos,
                        message: "expected '{'".into(),
                    })
                }
                None => {
                    return Err(SetSyntaxError {
                        offset: *pos,
                        message: "unexpected end of input".into(),
                    })
                }
            }
        }
    }

    /// Canonical printer: members ascending by code, no whitespace.
    pub fn display(&self, s: HfSet) -> SetDisplay<'_> {
        SetDisplay { store: self, set: s }
    }

    pub fn to_literal(&self, s: HfSet) -> String {
        self.display(s).to_string()
    }
}

fn skip_ws(bytes: &[u8], pos: &mut usize) {
    while bytes.get(*pos).is_some_and(|b| b.is_ascii_whitespace()) {
        *pos += 1;
    }
}

pub struct SetDisplay<'a> {
    store: &'a SetStore,
    set: HfSet,
}

impl fmt::Display for SetDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, m) in self.store.members(self.set).iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            SetDisplay {
                store: self.store,
                set: *m,
            }
            .fmt(f)?;
        }
        f.write_str("}")
    }
}
