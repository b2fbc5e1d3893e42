//! Finite first-order structures as HF sets.
//!
//! A structure over a relational signature is encoded as a set, its
//! satisfaction relation is translated into bounded set formulas, and small
//! theories are checked for completeness by enumerating their finite models.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::eval::{eval, Environment, EvalError, Universe};
use crate::kernel::{HfSet, KernelError, SetStore};
use crate::logic::{Formula, Name, ParseError, Term};

pub const MAX_DOMAIN: usize = 4;
pub const MAX_ARITY: usize = 3;
pub const MAX_DEPTH: usize = 4;
/// Largest number of interpretation bits enumerated per domain size.
pub const MAX_INTERPRETATION_BITS: usize = 20;
/// Parameter holding the encoded structure in translated formulas.
pub const STRUCTURE_PARAM: &str = "M";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetaError {
    #[error("structures need a nonempty domain")]
    EmptyDomain,
    #[error("{what} is {value}, cap is {cap}")]
    Cap {
        what: &'static str,
        value: usize,
        cap: usize,
    },
    #[error("signature mismatch: {0}")]
    Signature(String),
    #[error("tuple {tuple:?} of `{relation}` is outside the domain or has the wrong arity")]
    BadTuple { relation: String, tuple: Vec<usize> },
    #[error("not a structure encoding: {0}")]
    Decode(String),
    #[error("unbound variable `{0}`")]
    UnboundVariable(Name),
    #[error("theory line {line} is not a sentence: free {free}")]
    NotClosed { line: usize, free: String },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

// ---------------------------------------------------------------------------
// Signatures and structures

/// Relation symbols with arities, in declaration order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Signature {
    relations: Vec<(Name, usize)>,
}

impl Signature {
    pub fn new<S: AsRef<str>>(relations: &[(S, usize)]) -> Result<Self, MetaError> {
        let mut out = Signature::default();
        for (name, arity) in relations {
            let name = name.as_ref();
            if !is_identifier(name) || is_keyword(name) {
                return Err(MetaError::Signature(format!("bad relation name `{name}`")));
            }
            if *arity == 0 || *arity > MAX_ARITY {
                return Err(MetaError::Cap {
                    what: "arity",
                    value: *arity,
                    cap: MAX_ARITY,
                });
            }
            if out.index(name).is_some() {
                return Err(MetaError::Signature(format!("`{name}` declared twice")));
            }
            out.relations.push((name.into(), *arity));
        }
        Ok(out)
    }

    /// Parses a declaration line such as `sig R/2 S/1`.
    pub fn parse(line: &str) -> Result<Self, MetaError> {
        let mut words = line.split_whitespace();
        if words.next() != Some("sig") {
            return Err(MetaError::Signature("declaration must start with `sig`".into()));
        }
        let mut rels = Vec::new();
        for w in words {
            let (name, arity) = w
                .split_once('/')
                .ok_or_else(|| MetaError::Signature(format!("expected NAME/ARITY, found `{w}`")))?;
            let arity: usize = arity
                .parse()
                .map_err(|_| MetaError::Signature(format!("bad arity in `{w}`")))?;
            rels.push((name.to_string(), arity));
        }
        Signature::new(&rels)
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|(n, _)| &**n == name)
    }

    pub fn name(&self, j: usize) -> &Name {
        &self.relations[j].0
    }

    pub fn arity(&self, j: usize) -> usize {
        self.relations[j].1
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Name, usize)> {
        self.relations.iter().map(|(n, a)| (n, *a))
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("sig")?;
        for (n, a) in &self.relations {
            write!(f, " {n}/{a}")?;
        }
        Ok(())
    }
}

/// A finite structure with domain `{0, .., size-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FinStructure {
    size: usize,
    signature: Signature,
    relations: Vec<BTreeSet<Vec<usize>>>,
}

impl FinStructure {
    pub fn new(
        size: usize,
        signature: Signature,
        relations: Vec<BTreeSet<Vec<usize>>>,
    ) -> Result<Self, MetaError> {
        if size == 0 {
            return Err(MetaError::EmptyDomain);
        }
        if relations.len() != signature.len() {
            return Err(MetaError::Signature(format!(
                "{} interpretations for {} relations",
                relations.len(),
                signature.len()
            )));
        }
        for (j, rel) in relations.iter().enumerate() {
            for t in rel {
                if t.len() != signature.arity(j) || t.iter().any(|&e| e >= size) {
                    return Err(MetaError::BadTuple {
                        relation: signature.name(j).to_string(),
                        tuple: t.clone(),
                    });
                }
            }
        }
        Ok(FinStructure {
            size,
            signature,
            relations,
        })
    }

    /// A structure with every relation empty.
    pub fn bare(size: usize, signature: Signature) -> Result<Self, MetaError> {
        let rels = vec![BTreeSet::new(); signature.len()];
        FinStructure::new(size, signature, rels)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn relation(&self, j: usize) -> &BTreeSet<Vec<usize>> {
        &self.relations[j]
    }

    pub fn holds(&self, j: usize, tuple: &[usize]) -> bool {
        self.relations[j].contains(tuple)
    }

    /// The image of the structure under `perm`, a permutation of the domain.
    pub fn permuted(&self, perm: &[usize]) -> FinStructure {
        let relations = self
            .relations
            .iter()
            .map(|r| r.iter().map(|t| t.iter().map(|&e| perm[e]).collect()).collect())
            .collect();
        FinStructure {
            size: self.size,
            signature: self.signature.clone(),
            relations,
        }
    }

    /// Interpretation bits, relation by relation, tuples in lexicographic order.
    fn bits_under(&self, perm: &[usize]) -> Vec<bool> {
        let mut bits = Vec::new();
        for (j, (_, arity)) in self.signature.iter().enumerate() {
            let mut rel = vec![false; self.size.pow(arity as u32)];
            for t in &self.relations[j] {
                rel[tuple_rank(t.iter().map(|&e| perm[e]), self.size)] = true;
            }
            bits.extend(rel);
        }
        bits
    }

    /// Isomorphism invariant: the least bit string over all relabellings.
    pub fn canonical_form(&self) -> Vec<bool> {
        permutations(self.size)
            .map(|p| self.bits_under(&p))
            .min()
            .expect("at least the identity")
    }

    /// Reads the structure file format: a `sig` line, a `size N` line, then
    /// one `NAME e1 .. ek` line per tuple. `#` starts a comment.
    pub fn parse(text: &str) -> Result<FinStructure, MetaError> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let signature = Signature::parse(lines.next().unwrap_or(""))?;
        let size = lines
            .next()
            .and_then(|l| l.strip_prefix("size"))
            .and_then(|n| n.trim().parse::<usize>().ok())
            .ok_or_else(|| MetaError::Signature("expected `size N` after the `sig` line".into()))?;
        let mut relations = vec![BTreeSet::new(); signature.len()];
        for line in lines {
            let mut words = line.split_whitespace();
            let name = words.next().expect("non-empty line");
            let j = signature
                .index(name)
                .ok_or_else(|| MetaError::Signature(format!("unknown relation `{name}`")))?;
            let tuple = words
                .map(|w| w.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| MetaError::Signature(format!("bad tuple line `{line}`")))?;
            relations[j].insert(tuple);
        }
        FinStructure::new(size, signature, relations)
    }

    /// The structure file format read by [`FinStructure::parse`].
    pub fn to_file_text(&self) -> String {
        let mut out = format!("{}\nsize {}\n", self.signature, self.size);
        for (j, rel) in self.relations.iter().enumerate() {
            for t in rel {
                out.push_str(self.signature.name(j));
                for e in t {
                    out.push_str(&format!(" {e}"));
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn is_isomorphic(&self, other: &FinStructure) -> bool {
        self.size == other.size
            && self.signature == other.signature
            && self.canonical_form() == other.canonical_form()
    }
}

impl fmt::Display for FinStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "size {}", self.size)?;
        for (j, (name, _)) in self.signature.iter().enumerate() {
            write!(f, "; {name} = {{")?;
            for (i, t) in self.relations[j].iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                let parts: Vec<String> = t.iter().map(|e| e.to_string()).collect();
                write!(f, "({})", parts.join(","))?;
            }
            f.write_str("}")?;
        }
        Ok(())
    }
}

fn tuple_rank(t: impl Iterator<Item = usize>, n: usize) -> usize {
    t.fold(0, |acc, e| acc * n + e)
}

fn tuple_unrank(mut r: usize, n: usize, arity: usize) -> Vec<usize> {
    let mut t = vec![0; arity];
    for slot in t.iter_mut().rev() {
        *slot = r % n;
        r /= n;
    }
    t
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut next = Some((0..n).collect::<Vec<_>>());
    std::iter::from_fn(move || {
        let cur = next.take()?;
        let mut p = cur.clone();
        if let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) {
            let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("exists");
            p.swap(i - 1, j);
            p[i..].reverse();
            next = Some(p);
        }
        Some(cur)
    })
}

/// Every structure of the given size over `sig`.
pub fn all_structures(
    signature: &Signature,
    size: usize,
) -> Result<impl Iterator<Item = FinStructure> + '_, MetaError> {
    if size == 0 {
        return Err(MetaError::EmptyDomain);
    }
    if size > MAX_DOMAIN {
        return Err(MetaError::Cap {
            what: "domain size",
            value: size,
            cap: MAX_DOMAIN,
        });
    }
    let widths: Vec<usize> = signature.iter().map(|(_, a)| size.pow(a as u32)).collect();
    let bits: usize = widths.iter().sum();
    if bits > MAX_INTERPRETATION_BITS {
        return Err(MetaError::Cap {
            what: "interpretation bits",
            value: bits,
            cap: MAX_INTERPRETATION_BITS,
        });
    }
    Ok((0u64..1 << bits).map(move |mask| {
        let mut offset = 0;
        let relations = widths
            .iter()
            .enumerate()
            .map(|(j, &w)| {
                let rel = (0..w)
                    .filter(|r| mask >> (offset + r) & 1 == 1)
                    .map(|r| tuple_unrank(r, size, signature.arity(j)))
                    .collect();
                offset += w;
                rel
            })
            .collect();
        FinStructure {
            size,
            signature: signature.clone(),
            relations,
        }
    }))
}

// ---------------------------------------------------------------------------
// First-order formulas

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FOFormula {
    Rel(Name, Vec<Name>),
    Eq(Name, Name),
    True,
    False,
    Not(Box<FOFormula>),
    And(Box<FOFormula>, Box<FOFormula>),
    Or(Box<FOFormula>, Box<FOFormula>),
    Implies(Box<FOFormula>, Box<FOFormula>),
    Forall(Name, Box<FOFormula>),
    Exists(Name, Box<FOFormula>),
}

impl FOFormula {
    #[allow(clippy::should_implement_trait)]
    pub fn not(f: FOFormula) -> Self {
        FOFormula::Not(Box::new(f))
    }

    pub fn and(a: FOFormula, b: FOFormula) -> Self {
        FOFormula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: FOFormula, b: FOFormula) -> Self {
        FOFormula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: FOFormula, b: FOFormula) -> Self {
        FOFormula::Implies(Box::new(a), Box::new(b))
    }

    pub fn forall(v: &str, f: FOFormula) -> Self {
        FOFormula::Forall(v.into(), Box::new(f))
    }

    pub fn exists(v: &str, f: FOFormula) -> Self {
        FOFormula::Exists(v.into(), Box::new(f))
    }

    pub fn depth(&self) -> usize {
        match self {
            FOFormula::Rel(..) | FOFormula::Eq(..) | FOFormula::True | FOFormula::False => 1,
            FOFormula::Not(g) | FOFormula::Forall(_, g) | FOFormula::Exists(_, g) => 1 + g.depth(),
            FOFormula::And(a, b) | FOFormula::Or(a, b) | FOFormula::Implies(a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }

    pub fn free_vars(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
        let mut see = |v: &Name, bound: &Vec<Name>| {
            if !bound.contains(v) {
                out.insert(v.clone());
            }
        };
        match self {
            FOFormula::Rel(_, args) => args.iter().for_each(|v| see(v, bound)),
            FOFormula::Eq(a, b) => {
                see(a, bound);
                see(b, bound);
            }
            FOFormula::True | FOFormula::False => {}
            FOFormula::Not(g) => g.collect_free(bound, out),
            FOFormula::And(a, b) | FOFormula::Or(a, b) | FOFormula::Implies(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            FOFormula::Forall(v, g) | FOFormula::Exists(v, g) => {
                bound.push(v.clone());
                g.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    pub fn is_sentence(&self) -> bool {
        self.free_vars().is_empty()
    }

    /// Every variable name occurring anywhere, bound or free.
    pub fn names(&self) -> HashSet<Name> {
        let mut out = HashSet::new();
        self.walk(&mut |f| match f {
            FOFormula::Rel(_, args) => out.extend(args.iter().cloned()),
            FOFormula::Eq(a, b) => {
                out.insert(a.clone());
                out.insert(b.clone());
            }
            FOFormula::Forall(v, _) | FOFormula::Exists(v, _) => {
                out.insert(v.clone());
            }
            _ => {}
        });
        out
    }

    fn walk(&self, visit: &mut dyn FnMut(&FOFormula)) {
        visit(self);
        match self {
            FOFormula::Not(g) | FOFormula::Forall(_, g) | FOFormula::Exists(_, g) => g.walk(visit),
            FOFormula::And(a, b) | FOFormula::Or(a, b) | FOFormula::Implies(a, b) => {
                a.walk(visit);
                b.walk(visit);
            }
            _ => {}
        }
    }

    /// Checks relation symbols and arities against `sig`.
    pub fn check(&self, sig: &Signature) -> Result<(), MetaError> {
        let mut err = None;
        self.walk(&mut |f| {
            if let FOFormula::Rel(r, args) = f {
                let problem = match sig.index(r) {
                    None => Some(format!("unknown relation `{r}`")),
                    Some(j) if sig.arity(j) != args.len() => Some(format!(
                        "`{r}` has arity {}, used with {} arguments",
                        sig.arity(j),
                        args.len()
                    )),
                    _ => None,
                };
                if err.is_none() {
                    err = problem;
                }
            }
        });
        err.map_or(Ok(()), |e| Err(MetaError::Signature(e)))
    }

    fn precedence(&self) -> u8 {
        match self {
            FOFormula::Forall(..) | FOFormula::Exists(..) => 0,
            FOFormula::Implies(..) => 1,
            FOFormula::Or(..) => 2,
            FOFormula::And(..) => 3,
            FOFormula::Not(..) => 4,
            _ => 5,
        }
    }

    fn write_at(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.precedence() < min {
            f.write_str("(")?;
            self.write_at(f, 0)?;
            return f.write_str(")");
        }
        match self {
            FOFormula::Rel(r, args) => {
                let args: Vec<&str> = args.iter().map(|a| &**a).collect();
                write!(f, "{r}({})", args.join(","))
            }
            FOFormula::Eq(a, b) => write!(f, "{a} = {b}"),
            FOFormula::True => f.write_str("true"),
            FOFormula::False => f.write_str("false"),
            FOFormula::Not(g) => {
                f.write_str("!")?;
                g.write_at(f, 4)
            }
            FOFormula::And(a, b) => {
                a.write_at(f, 3)?;
                f.write_str(" & ")?;
                b.write_at(f, 4)
            }
            FOFormula::Or(a, b) => {
                a.write_at(f, 2)?;
                f.write_str(" | ")?;
                b.write_at(f, 3)
            }
            FOFormula::Implies(a, b) => {
                a.write_at(f, 2)?;
                f.write_str(" -> ")?;
                b.write_at(f, 1)
            }
            FOFormula::Forall(v, g) => {
                write!(f, "forall {v} . ")?;
                g.write_at(f, 0)
            }
            FOFormula::Exists(v, g) => {
                write!(f, "exists {v} . ")?;
                g.write_at(f, 0)
            }
        }
    }
}

impl fmt::Display for FOFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_at(f, 0)
    }
}

fn is_identifier(s: &str) -> bool {
    let mut cs = s.chars();
    cs.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && cs.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_keyword(s: &str) -> bool {
    matches!(s, "forall" | "exists" | "true" | "false" | "sig")
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, PartialEq, Eq)]
enum FoTok {
    Ident(String),
    Forall,
    Exists,
    True,
    False,
    LParen,
    RParen,
    Comma,
    Dot,
    Eq,
    And,
    Or,
    Not,
    Arrow,
    End,
}

impl FoTok {
    fn describe(&self) -> String {
        match self {
            FoTok::Ident(s) => format!("identifier `{s}`"),
            FoTok::Forall => "`forall`".into(),
            FoTok::Exists => "`exists`".into(),
            FoTok::True => "`true`".into(),
            FoTok::False => "`false`".into(),
            FoTok::LParen => "`(`".into(),
            FoTok::RParen => "`)`".into(),
            FoTok::Comma => "`,`".into(),
            FoTok::Dot => "`.`".into(),
            FoTok::Eq => "`=`".into(),
            FoTok::And => "`&`".into(),
            FoTok::Or => "`|`".into(),
            FoTok::Not => "`!`".into(),
            FoTok::Arrow => "`->`".into(),
            FoTok::End => "end of input".into(),
        }
    }
}

fn fo_lex(text: &str) -> Result<Vec<(FoTok, usize, usize)>, ParseError> {
    let mut out = Vec::new();
    let (mut line, mut col) = (1, 1);
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (l, k) = (line, col);
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            col += 1;
            i += 1;
            continue;
        }
        let single = match c {
            '(' => Some(FoTok::LParen),
            ')' => Some(FoTok::RParen),
            ',' => Some(FoTok::Comma),
            '.' => Some(FoTok::Dot),
            '=' => Some(FoTok::Eq),
            '&' => Some(FoTok::And),
            '|' => Some(FoTok::Or),
            '!' => Some(FoTok::Not),
            _ => None,
        };
        if let Some(t) = single {
            out.push((t, l, k));
            i += 1;
            col += 1;
        } else if c == '-' && chars.get(i + 1) == Some(&'>') {
            out.push((FoTok::Arrow, l, k));
            i += 2;
            col += 2;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let s = i;
            while chars.get(i).is_some_and(|c| c.is_ascii_alphanumeric() || *c == '_') {
                i += 1;
            }
            col += i - s;
            let word: String = chars[s..i].iter().collect();
            let tok = match word.as_str() {
                "forall" => FoTok::Forall,
                "exists" => FoTok::Exists,
                "true" => FoTok::True,
                "false" => FoTok::False,
                _ => FoTok::Ident(word),
            };
            out.push((tok, l, k));
        } else {
            return Err(ParseError {
                line: l,
                column: k,
                found: format!("`{c}`"),
                expected: vec!["a formula token".into()],
            });
        }
    }
    out.push((FoTok::End, line, col));
    Ok(out)
}

struct FoParser {
    toks: Vec<(FoTok, usize, usize)>,
    pos: usize,
}

impl FoParser {
    fn peek(&self) -> &FoTok {
        &self.toks[self.pos].0
    }

    fn bump(&mut self) -> FoTok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        let (tok, line, column) = &self.toks[self.pos];
        ParseError {
            line: *line,
            column: *column,
            found: tok.describe(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn expect(&mut self, tok: FoTok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&[what]))
        }
    }

    fn ident(&mut self) -> Result<Name, ParseError> {
        match self.peek().clone() {
            FoTok::Ident(v) => {
                self.bump();
                Ok(v.into())
            }
            _ => Err(self.error(&["identifier"])),
        }
    }

    fn formula(&mut self) -> Result<FOFormula, ParseError> {
        match self.peek() {
            FoTok::Forall | FoTok::Exists => {
                let universal = self.bump() == FoTok::Forall;
                let v = self.ident()?;
                self.expect(FoTok::Dot, "`.`")?;
                let body = Box::new(self.formula()?);
                Ok(if universal {
                    FOFormula::Forall(v, body)
                } else {
                    FOFormula::Exists(v, body)
                })
            }
            _ => self.implication(),
        }
    }

    fn implication(&mut self) -> Result<FOFormula, ParseError> {
        let lhs = self.disjunction()?;
        if *self.peek() == FoTok::Arrow {
            self.bump();
            return Ok(FOFormula::implies(lhs, self.implication()?));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<FOFormula, ParseError> {
        let mut acc = self.conjunction()?;
        while *self.peek() == FoTok::Or {
            self.bump();
            acc = FOFormula::or(acc, self.conjunction()?);
        }
        Ok(acc)
    }

    fn conjunction(&mut self) -> Result<FOFormula, ParseError> {
        let mut acc = self.negation()?;
        while *self.peek() == FoTok::And {
            self.bump();
            acc = FOFormula::and(acc, self.negation()?);
        }
        Ok(acc)
    }

    fn negation(&mut self) -> Result<FOFormula, ParseError> {
        if *self.peek() == FoTok::Not {
            self.bump();
            return Ok(FOFormula::not(self.negation()?));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<FOFormula, ParseError> {
        match self.peek().clone() {
            FoTok::True => {
                self.bump();
                Ok(FOFormula::True)
            }
            FoTok::False => {
                self.bump();
                Ok(FOFormula::False)
            }
            FoTok::LParen => {
                self.bump();
                let f = self.formula()?;
                self.expect(FoTok::RParen, "`)`")?;
                Ok(f)
            }
            FoTok::Ident(name) => {
                self.bump();
                match self.peek() {
                    FoTok::Eq => {
                        self.bump();
                        Ok(FOFormula::Eq(name.into(), self.ident()?))
                    }
                    FoTok::LParen => {
                        self.bump();
                        let mut args = vec![self.ident()?];
                        while *self.peek() == FoTok::Comma {
                            self.bump();
                            args.push(self.ident()?);
                        }
                        self.expect(FoTok::RParen, "`)`")?;
                        Ok(FOFormula::Rel(name.into(), args))
                    }
                    _ => Err(self.error(&["`=`", "`(`"])),
                }
            }
            _ => Err(self.error(&["`!`", "`(`", "`true`", "`false`", "identifier", "`forall`", "`exists`"])),
        }
    }
}

/// Parses a first-order formula. Same connectives as set formulas; atoms are
/// `R(x,y)` and `x = y`, quantifiers range over the domain.
pub fn parse_fo(text: &str) -> Result<FOFormula, ParseError> {
    let mut p = FoParser {
        toks: fo_lex(text)?,
        pos: 0,
    };
    let f = p.formula()?;
    if *p.peek() != FoTok::End {
        return Err(p.error(&["end of input"]));
    }
    Ok(f)
}

/// A signature and finitely many sentences over it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Theory {
    pub signature: Signature,
    pub sentences: Vec<FOFormula>,
}

impl Theory {
    pub fn new(signature: Signature, sentences: Vec<FOFormula>) -> Result<Self, MetaError> {
        for (i, s) in sentences.iter().enumerate() {
            s.check(&signature)?;
            if let Some(v) = s.free_vars().into_iter().next() {
                return Err(MetaError::NotClosed {
                    line: i + 1,
                    free: v.to_string(),
                });
            }
        }
        Ok(Theory {
            signature,
            sentences,
        })
    }

    /// Reads the theory file format: a `sig` line, then one sentence per
    /// line. Blank lines and `#` comments are skipped. Error positions refer
    /// to the file.
    pub fn parse(text: &str) -> Result<Self, MetaError> {
        let mut signature = None;
        let mut sentences = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("");
            if line.trim().is_empty() {
                continue;
            }
            if signature.is_none() {
                signature = Some(Signature::parse(line)?);
                continue;
            }
            let f = parse_fo(line).map_err(|mut e| {
                e.line = idx + 1;
                MetaError::Parse(e)
            })?;
            if let Some(v) = f.free_vars().into_iter().next() {
                return Err(MetaError::NotClosed {
                    line: idx + 1,
                    free: v.to_string(),
                });
            }
            f.check(signature.as_ref().expect("set above"))?;
            sentences.push(f);
        }
        let signature =
            signature.ok_or_else(|| MetaError::Signature("missing `sig` line".into()))?;
        Ok(Theory {
            signature,
            sentences,
        })
    }
}

impl fmt::Display for Theory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.signature)?;
        for s in &self.sentences {
            writeln!(f, "{s}")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Direct satisfaction

/// `m ⊨ phi[assignment]`, evaluated directly on the structure.
pub fn fo_eval(
    m: &FinStructure,
    phi: &FOFormula,
    assignment: &mut Vec<(Name, usize)>,
) -> Result<bool, MetaError> {
    let lookup = |v: &Name, a: &Vec<(Name, usize)>| {
        a.iter()
            .rev()
            .find(|(n, _)| n == v)
            .map(|(_, e)| *e)
            .ok_or_else(|| MetaError::UnboundVariable(v.clone()))
    };
    Ok(match phi {
        FOFormula::Rel(r, args) => {
            let j = m
                .signature
                .index(r)
                .ok_or_else(|| MetaError::Signature(format!("unknown relation `{r}`")))?;
            if args.len() != m.signature.arity(j) {
                return Err(MetaError::Signature(format!("arity mismatch for `{r}`")));
            }
            let t = args
                .iter()
                .map(|v| lookup(v, assignment))
                .collect::<Result<Vec<_>, _>>()?;
            m.holds(j, &t)
        }
        FOFormula::Eq(a, b) => lookup(a, assignment)? == lookup(b, assignment)?,
        FOFormula::True => true,
        FOFormula::False => false,
        FOFormula::Not(g) => !fo_eval(m, g, assignment)?,
        FOFormula::And(a, b) => fo_eval(m, a, assignment)? && fo_eval(m, b, assignment)?,
        FOFormula::Or(a, b) => fo_eval(m, a, assignment)? || fo_eval(m, b, assignment)?,
        FOFormula::Implies(a, b) => !fo_eval(m, a, assignment)? || fo_eval(m, b, assignment)?,
        FOFormula::Forall(v, g) | FOFormula::Exists(v, g) => {
            let universal = matches!(phi, FOFormula::Forall(..));
            for e in 0..m.size {
                assignment.push((v.clone(), e));
                let r = fo_eval(m, g, assignment);
                assignment.pop();
                if r? != universal {
                    return Ok(!universal);
                }
            }
            universal
        }
    })
}

/// Truth of a sentence.
pub fn fo_holds(m: &FinStructure, phi: &FOFormula) -> Result<bool, MetaError> {
    fo_eval(m, phi, &mut Vec::new())
}

// ---------------------------------------------------------------------------
// Encoding

fn tuple_set(store: &mut SetStore, t: &[usize]) -> HfSet {
    let head = store.numeral(t[0]);
    if t.len() == 1 {
        return head;
    }
    let rest = tuple_set(store, &t[1..]);
    store.kuratowski_pair(head, rest)
}

/// `pair(domain, {pair(ĵ, R_j)})` with elements as numerals and tuples as
/// right-nested pairs; a 1-tuple is its element.
pub fn encode_structure(store: &mut SetStore, m: &FinStructure) -> Result<HfSet, MetaError> {
    if m.size > MAX_DOMAIN {
        return Err(MetaError::Cap {
            what: "domain size",
            value: m.size,
            cap: MAX_DOMAIN,
        });
    }
    let domain = store.numeral(m.size);
    let mut entries = Vec::new();
    for (j, rel) in m.relations.iter().enumerate() {
        let tuples: Vec<HfSet> = rel.iter().map(|t| tuple_set(store, t)).collect();
        let r = store.make_set(tuples);
        let tag = store.numeral(j);
        entries.push(store.kuratowski_pair(tag, r));
    }
    let interp = store.make_set(entries);
    Ok(store.kuratowski_pair(domain, interp))
}

fn decode_numeral(store: &mut SetStore, s: HfSet) -> Result<usize, MetaError> {
    let k = store.card(s);
    if store.numeral(k) != s {
        return Err(MetaError::Decode(format!("{} is not a numeral", store.display(s))));
    }
    Ok(k)
}

fn decode_tuple(store: &mut SetStore, s: HfSet, arity: usize) -> Result<Vec<usize>, MetaError> {
    if arity == 1 {
        return Ok(vec![decode_numeral(store, s)?]);
    }
    let (a, b) = store
        .unpair(s)
        .ok_or_else(|| MetaError::Decode(format!("{} is not a pair", store.display(s))))?;
    let mut t = vec![decode_numeral(store, a)?];
    t.extend(decode_tuple(store, b, arity - 1)?);
    Ok(t)
}

/// Inverse of [`encode_structure`], given the signature.
pub fn decode_structure(
    store: &mut SetStore,
    s: HfSet,
    signature: &Signature,
) -> Result<FinStructure, MetaError> {
    let (domain, interp) = store
        .unpair(s)
        .ok_or_else(|| MetaError::Decode("structure is not a pair".into()))?;
    let size = decode_numeral(store, domain)?;
    let mut relations = vec![None; signature.len()];
    for entry in store.members(interp).to_vec() {
        let (tag, r) = store
            .unpair(entry)
            .ok_or_else(|| MetaError::Decode("interpretation entry is not a pair".into()))?;
        let j = decode_numeral(store, tag)?;
        if j >= signature.len() || relations[j].is_some() {
            return Err(MetaError::Decode(format!("unexpected relation index {j}")));
        }
        let mut rel = BTreeSet::new();
        for t in store.members(r).to_vec() {
            rel.insert(decode_tuple(store, t, signature.arity(j))?);
        }
        relations[j] = Some(rel);
    }
    let relations = relations
        .into_iter()
        .enumerate()
        .map(|(j, r)| r.ok_or_else(|| MetaError::Decode(format!("relation {j} missing"))))
        .collect::<Result<Vec<_>, _>>()?;
    FinStructure::new(size, signature.clone(), relations)
}

// ---------------------------------------------------------------------------
// Translation

struct Fresh {
    taken: HashSet<Name>,
    next: usize,
}

impl Fresh {
    fn name(&mut self, stem: &str) -> Name {
        loop {
            self.next += 1;
            let n: Name = format!("{stem}{}", self.next).into();
            if self.taken.insert(n.clone()) {
                return n;
            }
        }
    }
}

fn var(n: &Name) -> Term {
    Term::Var(n.clone())
}

/// `∀q∈t ∀z∈q (z = a ∨ z = b)`
fn only_members_of(fresh: &mut Fresh, t: &Term, a: &Term, b: &Term) -> Formula {
    let (q, z) = (fresh.name("q"), fresh.name("z"));
    Formula::forall_in(
        &q,
        t.clone(),
        Formula::forall_in(
            &z,
            var(&q),
            Formula::or(
                Formula::Equal(var(&z), a.clone()),
                Formula::Equal(var(&z), b.clone()),
            ),
        ),
    )
}

/// `t = {{a},{a,b}}`
fn is_pair(fresh: &mut Fresh, t: &Term, a: &Term, b: &Term) -> Formula {
    let singleton_a = |fresh: &mut Fresh, q: &Term| {
        let z = fresh.name("z");
        Formula::and(
            Formula::Member(a.clone(), q.clone()),
            Formula::forall_in(&z, q.clone(), Formula::Equal(var(&z), a.clone())),
        )
    };
    let doubleton = |fresh: &mut Fresh, q: &Term| {
        let z = fresh.name("z");
        Formula::and(
            Formula::and(Formula::Member(a.clone(), q.clone()), Formula::Member(b.clone(), q.clone())),
            Formula::forall_in(
                &z,
                q.clone(),
                Formula::or(
                    Formula::Equal(var(&z), a.clone()),
                    Formula::Equal(var(&z), b.clone()),
                ),
            ),
        )
    };
    let (q1, q2, q3) = (fresh.name("q"), fresh.name("q"), fresh.name("q"));
    let has_single = Formula::exists_in(&q1, t.clone(), singleton_a(fresh, &var(&q1)));
    let has_double = Formula::exists_in(&q2, t.clone(), doubleton(fresh, &var(&q2)));
    let only = Formula::forall_in(
        &q3,
        t.clone(),
        Formula::or(singleton_a(fresh, &var(&q3)), doubleton(fresh, &var(&q3))),
    );
    Formula::and(Formula::and(has_single, has_double), only)
}

/// `t` encodes the tuple of the given element terms.
fn is_tuple(fresh: &mut Fresh, t: &Term, args: &[Term]) -> Formula {
    if args.len() == 1 {
        return Formula::Equal(t.clone(), args[0].clone());
    }
    let (q, u) = (fresh.name("q"), fresh.name("u"));
    let body = Formula::and(
        is_pair(fresh, t, &args[0], &var(&u)),
        is_tuple(fresh, &var(&u), &args[1..]),
    );
    Formula::exists_in(&q, t.clone(), Formula::exists_in(&u, var(&q), body))
}

/// A bounded formula in the single parameter `$M` that holds of an encoded
/// structure exactly when the structure satisfies `phi` under the same
/// assignment of its free variables.
pub fn sat_to_bounded(
    store: &mut SetStore,
    phi: &FOFormula,
    signature: &Signature,
) -> Result<Formula, MetaError> {
    phi.check(signature)?;
    let mut fresh = Fresh {
        taken: phi.names(),
        next: 0,
    };
    let m = Term::param(STRUCTURE_PARAM);
    let d = fresh.name("dom");
    let i = fresh.name("interp");
    let mut used: Vec<usize> = Vec::new();
    phi.walk(&mut |f| {
        if let FOFormula::Rel(r, _) = f {
            let j = signature.index(r).expect("checked");
            if !used.contains(&j) {
                used.push(j);
            }
        }
    });
    used.sort_unstable();
    let rel_vars: HashMap<usize, Name> = used.iter().map(|&j| (j, fresh.name("rel"))).collect();

    let mut body = translate(phi, &var(&d), &rel_vars, signature, &mut fresh);
    for &j in used.iter().rev() {
        let tag = Term::Const(store.numeral(j));
        let rj = &rel_vars[&j];
        let (e, q, q2) = (fresh.name("e"), fresh.name("q"), fresh.name("q"));
        let tagged = Formula::forall_in(&q2, var(&e), Formula::Member(tag.clone(), var(&q2)));
        let second = only_members_of(&mut fresh, &var(&e), &tag, &var(rj));
        body = Formula::exists_in(
            &e,
            var(&i),
            Formula::and(
                tagged,
                Formula::exists_in(
                    &q,
                    var(&e),
                    Formula::exists_in(rj, var(&q), Formula::and(second, body)),
                ),
            ),
        );
    }
    let (r1, r2, q) = (fresh.name("r"), fresh.name("r"), fresh.name("q"));
    let first = Formula::forall_in(&q, m.clone(), Formula::Member(var(&d), var(&q)));
    let second = only_members_of(&mut fresh, &m, &var(&d), &var(&i));
    let with_interp = Formula::exists_in(
        &r2,
        m.clone(),
        Formula::exists_in(&i, var(&r2), Formula::and(second, body)),
    );
    Ok(Formula::exists_in(
        &r1,
        m,
        Formula::exists_in(&d, var(&r1), Formula::and(first, with_interp)),
    ))
}

fn translate(
    phi: &FOFormula,
    domain: &Term,
    rel_vars: &HashMap<usize, Name>,
    sig: &Signature,
    fresh: &mut Fresh,
) -> Formula {
    let go = |g: &FOFormula, fresh: &mut Fresh| translate(g, domain, rel_vars, sig, fresh);
    match phi {
        FOFormula::Rel(r, args) => {
            let j = sig.index(r).expect("checked");
            let rj = var(&rel_vars[&j]);
            let args: Vec<Term> = args.iter().map(var).collect();
            if args.len() == 1 {
                return Formula::Member(args[0].clone(), rj);
            }
            let t = fresh.name("t");
            let inner = is_tuple(fresh, &var(&t), &args);
            Formula::exists_in(&t, rj, inner)
        }
        FOFormula::Eq(a, b) => Formula::Equal(var(a), var(b)),
        FOFormula::True => Formula::True,
        FOFormula::False => Formula::False,
        FOFormula::Not(g) => Formula::not(go(g, fresh)),
        FOFormula::And(a, b) => {
            let a = go(a, fresh);
            Formula::and(a, go(b, fresh))
        }
        FOFormula::Or(a, b) => {
            let a = go(a, fresh);
            Formula::or(a, go(b, fresh))
        }
        FOFormula::Implies(a, b) => {
            let a = go(a, fresh);
            Formula::implies(a, go(b, fresh))
        }
        FOFormula::Forall(v, g) => Formula::forall_in(v, domain.clone(), go(g, fresh)),
        FOFormula::Exists(v, g) => Formula::exists_in(v, domain.clone(), go(g, fresh)),
    }
}

/// Smallest transitive set containing the encoding: the carrier used for
/// evaluating translated formulas.
pub fn encoding_carrier(store: &mut SetStore, encoded: HfSet) -> HfSet {
    let wrapped = store.singleton(encoded);
    store.transitive_closure(wrapped)
}

/// Decides `m ⊨ phi[assignment]` through the encoding and the translation.
pub fn satisfies_via_sets(
    store: &mut SetStore,
    m: &FinStructure,
    phi: &FOFormula,
    assignment: &[(Name, usize)],
) -> Result<bool, MetaError> {
    let encoded = encode_structure(store, m)?;
    let sigma = sat_to_bounded(store, phi, &m.signature)?;
    let carrier = encoding_carrier(store, encoded);
    let e = store.empty();
    let u = Universe::new(store, carrier, e)?;
    let mut env = Environment::new().with_param(STRUCTURE_PARAM, encoded);
    for (v, x) in assignment {
        let value = store.numeral(*x);
        env = env.with_var(v, value);
    }
    Ok(eval(store, &sigma, &env, &u)?)
}

// ---------------------------------------------------------------------------
// Completeness

/// Models of `t` with at most `size_cap` elements, one per isomorphism class,
/// smaller domains first.
pub fn models_upto(t: &Theory, size_cap: usize) -> Result<Vec<FinStructure>, MetaError> {
    let mut out = Vec::new();
    for n in 1..=size_cap {
        let mut seen = HashSet::new();
        for m in all_structures(&t.signature, n)? {
            let mut ok = true;
            for s in &t.sentences {
                if !fo_holds(&m, s)? {
                    ok = false;
                    break;
                }
            }
            if ok && seen.insert(m.canonical_form()) {
                out.push(m);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Completeness {
    /// Every sentence up to `depth_cap` has the same truth value in all
    /// models up to `size_cap`; `models` counts them up to isomorphism.
    Complete {
        models: usize,
        size_cap: usize,
        depth_cap: usize,
    },
    Counterexample {
        sentence: FOFormula,
        true_in: FinStructure,
        false_in: FinStructure,
    },
    /// No model with at most `size_cap` elements.
    Inconsistent { size_cap: usize },
}

impl fmt::Display for Completeness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Completeness::Complete {
                models,
                size_cap,
                depth_cap,
            } => write!(
                f,
                "complete relative to caps (size {size_cap}, depth {depth_cap}); {models} model(s) up to isomorphism"
            ),
            Completeness::Counterexample {
                sentence,
                true_in,
                false_in,
            } => write!(
                f,
                "incomplete: {sentence}\ntrue in: {true_in}\nfalse in: {false_in}"
            ),
            Completeness::Inconsistent { size_cap } => {
                write!(f, "inconsistent: no model with at most {size_cap} elements")
            }
        }
    }
}

const SEARCH_VARS: [&str; 3] = ["x", "y", "z"];

/// Truth table of a formula: one bit per (model, assignment of all search
/// variables).
#[derive(Clone, PartialEq, Eq, Hash)]
struct Table(Vec<u64>);

impl Table {
    fn new(len: usize) -> Self {
        Table(vec![0; len.div_ceil(64)])
    }

    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn zip(&self, other: &Table, op: impl Fn(u64, u64) -> u64, mask: &Table) -> Table {
        Table(
            self.0
                .iter()
                .zip(&other.0)
                .zip(&mask.0)
                .map(|((a, b), m)| op(*a, *b) & m)
                .collect(),
        )
    }
}

struct Space<'a> {
    models: &'a [FinStructure],
    vars: usize,
    offsets: Vec<usize>,
    len: usize,
    mask: Table,
}

impl<'a> Space<'a> {
    fn new(models: &'a [FinStructure], vars: usize) -> Self {
        let mut offsets = Vec::new();
        let mut len = 0;
        for m in models {
            offsets.push(len);
            len += m.size.pow(vars as u32);
        }
        let mut mask = Table::new(len);
        (0..len).for_each(|i| mask.set(i));
        Space {
            models,
            vars,
            offsets,
            len,
            mask,
        }
    }

    fn table(&self, pred: impl Fn(&FinStructure, &[usize]) -> bool) -> Table {
        let mut t = Table::new(self.len);
        for (mi, m) in self.models.iter().enumerate() {
            for r in 0..m.size.pow(self.vars as u32) {
                if pred(m, &tuple_unrank(r, m.size, self.vars)) {
                    t.set(self.offsets[mi] + r);
                }
            }
        }
        t
    }

    fn quantify(&self, t: &Table, var: usize, universal: bool) -> Table {
        let mut out = Table::new(self.len);
        for (mi, m) in self.models.iter().enumerate() {
            let n = m.size;
            let stride = n.pow((self.vars - 1 - var) as u32);
            for r in 0..n.pow(self.vars as u32) {
                let base = r - (r / stride % n) * stride;
                let mut acc = universal;
                for e in 0..n {
                    if t.get(self.offsets[mi] + base + e * stride) != universal {
                        acc = !universal;
                        break;
                    }
                }
                if acc {
                    out.set(self.offsets[mi] + r);
                }
            }
        }
        out
    }

    /// Per-model truth value, if the table does not depend on the assignment.
    fn model_values(&self, t: &Table) -> Vec<bool> {
        self.offsets.iter().map(|&o| t.get(o)).collect()
    }
}

struct Rep {
    formula: FOFormula,
    table: Table,
    free: BTreeSet<Name>,
}

/// Looks for a sentence of depth at most `depth_cap` whose truth differs
/// between two models of `t` with at most `size_cap` elements.
///
/// Formulas are enumerated level by level and kept up to equivalence over the
/// models found (same truth table and same free variables), so the search is
/// exhaustive while staying small. Within a level the order is: atoms, then
/// negations, conjunctions, disjunctions, implications, existentials and
/// universals.
pub fn check_complete_upto(
    t: &Theory,
    size_cap: usize,
    depth_cap: usize,
) -> Result<Completeness, MetaError> {
    if size_cap > MAX_DOMAIN {
        return Err(MetaError::Cap {
            what: "size cap",
            value: size_cap,
            cap: MAX_DOMAIN,
        });
    }
    if depth_cap > MAX_DEPTH {
        return Err(MetaError::Cap {
            what: "depth cap",
            value: depth_cap,
            cap: MAX_DEPTH,
        });
    }
    let models = models_upto(t, size_cap)?;
    if models.is_empty() {
        return Ok(Completeness::Inconsistent { size_cap });
    }
    let complete = Completeness::Complete {
        models: models.len(),
        size_cap,
        depth_cap,
    };
    if models.len() == 1 || depth_cap == 0 {
        return Ok(complete);
    }
    let k = depth_cap.saturating_sub(1).clamp(1, SEARCH_VARS.len());
    let vars: Vec<Name> = SEARCH_VARS[..k].iter().map(|v| Name::from(*v)).collect();
    let space = Space::new(&models, k);

    let mut reps: Vec<Rep> = Vec::new();
    let mut seen: HashSet<(Table, BTreeSet<Name>)> = HashSet::new();
    let mut levels: Vec<std::ops::Range<usize>> = Vec::new();

    // Returns the counterexample if the new formula is a separating sentence.
    let mut offer = |formula: FOFormula, table: Table, reps: &mut Vec<Rep>| -> Option<Completeness> {
        let free = formula.free_vars();
        if !seen.insert((table.clone(), free.clone())) {
            return None;
        }
        let found = if free.is_empty() {
            let values = space.model_values(&table);
            match (values.iter().position(|v| *v), values.iter().position(|v| !*v)) {
                (Some(a), Some(b)) => Some(Completeness::Counterexample {
                    sentence: formula.clone(),
                    true_in: models[a].clone(),
                    false_in: models[b].clone(),
                }),
                _ => None,
            }
        } else {
            None
        };
        reps.push(Rep {
            formula,
            table,
            free,
        });
        found
    };

    let start = reps.len();
    for (a, va) in vars.iter().enumerate() {
        for (b, vb) in vars.iter().enumerate().skip(a) {
            let table = space.table(|_, asg| asg[a] == asg[b]);
            if let Some(c) = offer(FOFormula::Eq(va.clone(), vb.clone()), table, &mut reps) {
                return Ok(c);
            }
        }
    }
    for (j, (name, arity)) in t.signature.iter().enumerate() {
        for r in 0..k.pow(arity as u32) {
            let idx = tuple_unrank(r, k, arity);
            let args = idx.iter().map(|&i| vars[i].clone()).collect();
            let table = space.table(|m, asg| {
                let tuple: Vec<usize> = idx.iter().map(|&i| asg[i]).collect();
                m.holds(j, &tuple)
            });
            if let Some(c) = offer(FOFormula::Rel(name.clone(), args), table, &mut reps) {
                return Ok(c);
            }
        }
    }
    for (f, table) in [
        (FOFormula::True, space.mask.clone()),
        (FOFormula::False, Table::new(space.len)),
    ] {
        if let Some(c) = offer(f, table, &mut reps) {
            return Ok(c);
        }
    }
    levels.push(start..reps.len());

    for _depth in 2..=depth_cap {
        let prev = levels.last().expect("level 1 exists").clone();
        let start = reps.len();
        for i in prev.clone() {
            if matches!(reps[i].formula, FOFormula::Not(_)) {
                continue;
            }
            let table = space.mask.zip(&reps[i].table, |m, a| m & !a, &space.mask);
            let f = FOFormula::not(reps[i].formula.clone());
            if let Some(c) = offer(f, table, &mut reps) {
                return Ok(c);
            }
        }
        // Every pair with at least one member from the previous level has its
        // larger index there.
        type Op = (fn(u64, u64) -> u64, fn(FOFormula, FOFormula) -> FOFormula, bool);
        let ops: [Op; 3] = [
            (|a, b| a & b, FOFormula::and, true),
            (|a, b| a | b, FOFormula::or, true),
            (|a, b| !a | b, FOFormula::implies, false),
        ];
        for (op, build, symmetric) in ops {
            for b in prev.clone() {
                for a in 0..b {
                    let orders: &[(usize, usize)] = if symmetric { &[(a, b)] } else { &[(a, b), (b, a)] };
                    for &(l, r) in orders {
                        let table = reps[l].table.zip(&reps[r].table, op, &space.mask);
                        let f = build(reps[l].formula.clone(), reps[r].formula.clone());
                        if let Some(c) = offer(f, table, &mut reps) {
                            return Ok(c);
                        }
                    }
                }
            }
        }
        for universal in [false, true] {
            for i in prev.clone() {
                for (vi, v) in vars.iter().enumerate() {
                    if !reps[i].free.contains(v) {
                        continue;
                    }
                    let table = space.quantify(&reps[i].table, vi, universal);
                    let body = reps[i].formula.clone();
                    let f = if universal {
                        FOFormula::Forall(v.clone(), Box::new(body))
                    } else {
                        FOFormula::Exists(v.clone(), Box::new(body))
                    };
                    if let Some(c) = offer(f, table, &mut reps) {
                        return Ok(c);
                    }
                }
            }
        }
        if reps.len() == start {
            break;
        }
        levels.push(start..reps.len());
    }
    Ok(complete)
}
