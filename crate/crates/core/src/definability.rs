//! Definable subsets of finite structures `(m, ∈, a ∩ m)` and the finite
//! constructible stages `L_n[a]`.
//!
//! The engine keeps a partition of `m` whose blocks are each carved out by a
//! formula in the free variable `x`. The definable family is then every union
//! of blocks, which is closed under complement, union and intersection by
//! construction. Each depth level proposes new formulas, evaluates them, and
//! splits every block the extension cuts:
//!
//! * level 1: the atoms over `x` and, when allowed, the parameters `$p_i`
//!   naming the elements of `m`;
//! * level `k+1`: for every block `C` of level `k` and every `c ≥ 1`, "x has
//!   at least `c` members in `C`" and "x is a member of at least `c`
//!   elements of `C`", written out with `c` distinct witnesses.
//!
//! A counting level that splits nothing is a fixpoint: every later level
//! proposes the same formulas again.

use std::fmt::Write as _;

use thiserror::Error;

use crate::eval::{eval, EvalError, Environment, Universe};
use crate::kernel::{HfSet, KernelError, SetStore};
use crate::logic::{enumerate_formulas, Formula, Name, Term};

/// Largest carrier the engine accepts: the family of subsets is capped at 2^16.
pub const MAX_CARRIER: usize = 16;

/// Depth levels tried by default.
pub const DEFAULT_DEPTH_BUDGET: usize = 8;

/// Largest carrier for the automorphism search.
pub const MAX_AUTOMORPHISM_CARRIER: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DefError {
    #[error("carrier has {size} elements; the subset family cap allows at most {cap}")]
    CarrierCap { size: usize, cap: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// One definable subset with the formula and parameters that define it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Definition {
    pub subset: HfSet,
    pub formula: Formula,
    pub params: Vec<(Name, HfSet)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DefReport {
    /// Ordered by the canonical order of the subsets.
    pub definitions: Vec<Definition>,
    /// True when a level split nothing before the budget ran out.
    pub exhausted: bool,
    /// Depth levels actually run.
    pub levels: usize,
}

impl DefReport {
    pub fn subsets(&self) -> impl Iterator<Item = HfSet> + '_ {
        self.definitions.iter().map(|d| d.subset)
    }

    /// One line per subset: set literal, tab, formula, tab, parameters.
    pub fn to_text(&self, store: &SetStore) -> String {
        let mut out = String::new();
        for d in &self.definitions {
            let params: Vec<String> = d
                .params
                .iter()
                .map(|(n, v)| format!("${n}={}", store.display(*v)))
                .collect();
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                store.display(d.subset),
                d.formula.display(store),
                params.join(",")
            );
        }
        out
    }
}

struct Block {
    /// Bit `i` stands for the `i`-th element of the carrier.
    mask: u32,
    formula: Formula,
}

/// Name of the parameter standing for the `i`-th carrier element.
pub fn param_name(i: usize) -> String {
    format!("p{i}")
}

/// The definable subsets of `(m, ∈, a ∩ m)`.
pub fn definable_subsets(
    store: &mut SetStore,
    m: HfSet,
    a: HfSet,
    allow_params: bool,
    depth_budget: usize,
) -> Result<DefReport, DefError> {
    let elems = store.members(m).to_vec();
    let n = elems.len();
    if n > MAX_CARRIER {
        return Err(DefError::CarrierCap {
            size: n,
            cap: MAX_CARRIER,
        });
    }
    let universe = Universe::restricted(store, m, a);
    let params: Vec<(Name, HfSet)> = if allow_params {
        elems
            .iter()
            .enumerate()
            .map(|(i, e)| (Name::from(param_name(i)), *e))
            .collect()
    } else {
        Vec::new()
    };
    let mut env = Environment::new();
    for (name, value) in &params {
        env.params.insert(name.clone(), *value);
    }

    let full: u32 = (1u32 << n) - 1;
    let x = Term::var("x");
    let mut blocks = vec![Block {
        mask: full,
        formula: Formula::Equal(x.clone(), x.clone()),
    }];
    if n == 0 {
        blocks.clear();
    }

    let extension = |store: &SetStore, f: &Formula| -> Result<u32, EvalError> {
        let mut mask = 0u32;
        for (i, e) in elems.iter().enumerate() {
            let mut env = env.clone();
            env.vars.insert("x".into(), *e);
            if eval(store, f, &env, &universe)? {
                mask |= 1 << i;
            }
        }
        Ok(mask)
    };

    let mut exhausted = false;
    let mut levels = 0;
    for level in 1..=depth_budget {
        levels = level;
        let candidates = if level == 1 {
            seed_formulas(&params)
        } else {
            counting_formulas(store, &blocks, &elems, level)
        };
        let mut split_any = false;
        for g in candidates {
            let ext = extension(store, &g)?;
            split_any |= split(&mut blocks, ext, &g);
        }
        // The seed level has nothing to be stable against.
        if !split_any && level > 1 {
            exhausted = true;
            break;
        }
    }

    let mut definitions = Vec::with_capacity(1 << blocks.len());
    for choice in 0u64..(1u64 << blocks.len()) {
        let chosen: Vec<&Block> = blocks
            .iter()
            .enumerate()
            .filter(|(i, _)| choice >> i & 1 == 1)
            .map(|(_, b)| b)
            .collect();
        let mask = chosen.iter().fold(0u32, |acc, b| acc | b.mask);
        let formula = if mask == full && n > 0 {
            Formula::Equal(x.clone(), x.clone())
        } else {
            Formula::disjoin(chosen.iter().map(|b| b.formula.clone()))
        };
        let used = formula.free_vars().params;
        let subset = store.make_set(
            elems
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, e)| *e),
        );
        definitions.push(Definition {
            subset,
            formula,
            params: params
                .iter()
                .filter(|(name, _)| used.contains(name))
                .cloned()
                .collect(),
        });
    }
    definitions.sort_by(|p, q| store.cmp(p.subset, q.subset));
    Ok(DefReport {
        definitions,
        exhausted,
        levels,
    })
}

/// Depth-one atoms in `x`, with parameters spelled `$p_i`.
fn seed_formulas(params: &[(Name, HfSet)]) -> Vec<Formula> {
    let consts: Vec<HfSet> = params.iter().map(|(_, v)| *v).collect();
    let atoms = enumerate_formulas(1, &["x"], &consts).expect("depth 1 is within budget");
    atoms
        .map(|f| {
            f.map_terms(&mut |t| match t {
                Term::Const(c) => {
                    let i = consts.iter().position(|v| v == c).expect("seeded constant");
                    Term::Param(params[i].0.clone())
                }
                other => other.clone(),
            })
        })
        .filter(|f| f.free_vars().vars.contains("x"))
        .collect()
}

/// Splits every block that `ext` cuts; returns whether anything changed.
fn split(blocks: &mut Vec<Block>, ext: u32, g: &Formula) -> bool {
    let mut changed = false;
    let mut out = Vec::with_capacity(blocks.len() + 1);
    for b in blocks.drain(..) {
        let inside = b.mask & ext;
        let outside = b.mask & !ext;
        if inside != 0 && outside != 0 {
            changed = true;
            out.push(Block {
                mask: inside,
                formula: Formula::and(b.formula.clone(), g.clone()),
            });
            out.push(Block {
                mask: outside,
                formula: Formula::and(b.formula, Formula::not(g.clone())),
            });
        } else {
            out.push(b);
        }
    }
    *blocks = out;
    changed
}

#[derive(Clone, Copy)]
enum Direction {
    /// Count members of `x`.
    Members,
    /// Count elements having `x` as a member.
    Holders,
}

fn counting_formulas(
    store: &SetStore,
    blocks: &[Block],
    elems: &[HfSet],
    level: usize,
) -> Vec<Formula> {
    let mut out = Vec::new();
    for block in blocks {
        for dir in [Direction::Members, Direction::Holders] {
            // Counts beyond the largest one present cannot split anything.
            let most = elems
                .iter()
                .map(|x| {
                    elems
                        .iter()
                        .enumerate()
                        .filter(|(i, y)| {
                            block.mask >> i & 1 == 1
                                && match dir {
                                    Direction::Members => store.contains(*x, **y),
                                    Direction::Holders => store.contains(**y, *x),
                                }
                        })
                        .count()
                })
                .max()
                .unwrap_or(0);
            for c in 1..=most {
                out.push(at_least(&block.formula, c, dir, level));
            }
        }
    }
    out
}

/// `∃y1 (rel(y1) ∧ C(y1) ∧ ∃y2 (rel(y2) ∧ C(y2) ∧ y2 ≠ y1 ∧ ...))`.
fn at_least(class: &Formula, c: usize, dir: Direction, level: usize) -> Formula {
    let name = |j: usize| format!("y{level}_{j}");
    let mut inner: Option<Formula> = None;
    for j in (1..=c).rev() {
        let y = name(j);
        let yt = Term::var(&y);
        let rel = match dir {
            Direction::Members => Formula::Member(yt.clone(), Term::var("x")),
            Direction::Holders => Formula::Member(Term::var("x"), yt.clone()),
        };
        let mut parts = vec![rel, class.rename_free("x", &y)];
        parts.extend((1..j).map(|i| Formula::not(Formula::Equal(yt.clone(), Term::var(&name(i))))));
        parts.extend(inner.take());
        inner = Some(Formula::exists(&y, Formula::conjoin(parts)));
    }
    inner.expect("c >= 1")
}

/// Provenance of a constructible stage.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LStage {
    pub set: HfSet,
    /// `exhausted` flag of each level built by the definability engine.
    pub exhausted: Vec<bool>,
    /// Whether some level was taken as a full power set instead of enumerated.
    pub powerset_shortcut: bool,
}

/// Levels from this index on are built as power sets: with parameters every
/// subset of a finite set is definable (singletons by `x = $p`, then unions).
pub const SHORTCUT_FROM: usize = 4;

/// `L_0[a] = ∅`, `L_{k+1}[a]` = subsets of `L_k[a]` definable with parameters.
pub fn l_stage(store: &mut SetStore, n: usize, a: HfSet) -> Result<LStage, DefError> {
    l_stage_with(store, n, a, DEFAULT_DEPTH_BUDGET)
}

pub fn l_stage_with(
    store: &mut SetStore,
    n: usize,
    a: HfSet,
    depth_budget: usize,
) -> Result<LStage, DefError> {
    let cap = store.caps().max_stage;
    if n > cap {
        return Err(KernelError::StageCap { requested: n, cap }.into());
    }
    let mut stage = LStage {
        set: store.empty(),
        exhausted: Vec::new(),
        powerset_shortcut: false,
    };
    for k in 0..n {
        if k >= SHORTCUT_FROM {
            stage.set = store.powerset(stage.set)?;
            stage.powerset_shortcut = true;
            continue;
        }
        let report = definable_subsets(store, stage.set, a, true, depth_budget)?;
        stage.exhausted.push(report.exhausted);
        let subsets: Vec<HfSet> = report.subsets().collect();
        stage.set = store.make_set(subsets);
    }
    Ok(stage)
}

/// Every permutation of `m` (as indices into its canonical member list)
/// preserving membership within `m` and membership in `a`.
pub fn automorphisms(store: &SetStore, m: HfSet, a: HfSet) -> Result<Vec<Vec<usize>>, DefError> {
    let elems = store.members(m);
    let n = elems.len();
    if n > MAX_AUTOMORPHISM_CARRIER {
        return Err(DefError::CarrierCap {
            size: n,
            cap: MAX_AUTOMORPHISM_CARRIER,
        });
    }
    let rel: Vec<Vec<bool>> = elems
        .iter()
        .map(|x| elems.iter().map(|y| store.contains(*y, *x)).collect())
        .collect();
    let in_a: Vec<bool> = elems.iter().map(|x| store.contains(a, *x)).collect();
    let mut out = Vec::new();
    let mut image = Vec::with_capacity(n);
    let mut used = vec![false; n];
    extend_automorphism(&rel, &in_a, &mut image, &mut used, &mut out);
    Ok(out)
}

fn extend_automorphism(
    rel: &[Vec<bool>],
    in_a: &[bool],
    image: &mut Vec<usize>,
    used: &mut [bool],
    out: &mut Vec<Vec<usize>>,
) {
    let i = image.len();
    if i == rel.len() {
        out.push(image.clone());
        return;
    }
    for j in 0..rel.len() {
        if used[j] || in_a[i] != in_a[j] || rel[i][i] != rel[j][j] {
            continue;
        }
        let consistent = (0..i).all(|k| {
            rel[i][k] == rel[j][image[k]] && rel[k][i] == rel[image[k]][j]
        });
        if !consistent {
            continue;
        }
        used[j] = true;
        image.push(j);
        extend_automorphism(rel, in_a, image, used, out);
        image.pop();
        used[j] = false;
    }
}
