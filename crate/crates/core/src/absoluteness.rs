//! Bounded formulas are absolute between a transitive universe and any larger
//! one. This module checks single instances, fuzzes the property with a
//! seeded generator, and searches for unbounded sentences that tell two
//! universes apart.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::eval::{eval, EvalError, Environment, Universe};
use crate::kernel::{HfSet, KernelError, SetStore};
use crate::logic::{enumerate_formulas_with_budget, Formula, LogicError, Name, Term};

/// One reason a `check_absolute` instance is outside the theorem's hypotheses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NotBounded,
    InnerNotTransitive,
    InnerNotContained,
    PredicateMismatch,
    /// A variable, parameter or set constant whose value is not in the inner carrier.
    Escapes(String),
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NotBounded => f.write_str("formula has an unbounded quantifier"),
            Violation::InnerNotTransitive => f.write_str("inner carrier is not transitive"),
            Violation::InnerNotContained => {
                f.write_str("inner carrier is not a subset of the outer carrier")
            }
            Violation::PredicateMismatch => {
                f.write_str("inner predicate is not the outer predicate restricted to the inner carrier")
            }
            Violation::Escapes(what) => write!(f, "{what} lies outside the inner carrier"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AbsError {
    #[error("precondition violated: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Preconditions(Vec<Violation>),
    #[error("outer universe must strictly contain the inner one, both transitive")]
    NotStrictTransitivePair,
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Logic(#[from] LogicError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub inner: bool,
    pub outer: bool,
}

impl Verdict {
    pub fn agree(&self) -> bool {
        self.inner == self.outer
    }
}

/// Evaluates `f` in both universes after checking the hypotheses.
pub fn check_absolute(
    store: &SetStore,
    f: &Formula,
    env: &Environment,
    inner: &Universe,
    outer: &Universe,
) -> Result<Verdict, AbsError> {
    let mut violations = Vec::new();
    if !f.is_bounded() {
        violations.push(Violation::NotBounded);
    }
    if !store.is_transitive(inner.carrier()) {
        violations.push(Violation::InnerNotTransitive);
    }
    if !store.is_subset(inner.carrier(), outer.carrier()) {
        violations.push(Violation::InnerNotContained);
    }
    let restricted: Vec<HfSet> = store
        .members(outer.pred_a())
        .iter()
        .copied()
        .filter(|x| store.contains(inner.carrier(), *x))
        .collect();
    if store.members(inner.pred_a()) != restricted.as_slice() {
        violations.push(Violation::PredicateMismatch);
    }
    for (name, value) in env.vars.iter() {
        if !store.contains(inner.carrier(), *value) {
            violations.push(Violation::Escapes(format!("variable `{name}`")));
        }
    }
    for (name, value) in env.params.iter() {
        if !store.contains(inner.carrier(), *value) {
            violations.push(Violation::Escapes(format!("parameter `${name}`")));
        }
    }
    let mut consts = Vec::new();
    f.map_terms(&mut |t| {
        if let Term::Const(c) = t {
            consts.push(*c);
        }
        t.clone()
    });
    for c in consts {
        if !store.contains(inner.carrier(), c) {
            violations.push(Violation::Escapes(format!("constant {}", store.display(c))));
        }
    }
    if !violations.is_empty() {
        violations.dedup();
        return Err(AbsError::Preconditions(violations));
    }
    Ok(Verdict {
        inner: eval(store, f, env, inner)?,
        outer: eval(store, f, env, outer)?,
    })
}

/// Knobs for [`fuzz_absoluteness`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FuzzConfig {
    pub seed: u64,
    pub trials: u64,
    pub max_depth: usize,
    /// Outer universes are `V_1 ..= V_max_stage`; at most 4.
    pub max_stage: usize,
    /// Keep one summary line per trial.
    pub verbose: bool,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            seed: 0,
            trials: 1000,
            max_depth: 4,
            max_stage: 4,
            verbose: false,
        }
    }
}

/// Everything needed to replay a failing trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Disagreement {
    pub trial: u64,
    pub formula: Formula,
    pub env: Environment,
    pub inner: Universe,
    pub outer: Universe,
    pub verdict: Verdict,
}

impl Disagreement {
    /// One line with everything needed to replay the instance.
    pub fn render(&self, store: &SetStore) -> String {
        let mut line = format!(
            "trial={}\tformula={}\tinner_carrier={}\tinner_pred={}\touter_carrier={}\touter_pred={}\tinner={}\touter={}",
            self.trial,
            self.formula.display(store),
            store.display(self.inner.carrier()),
            store.display(self.inner.pred_a()),
            store.display(self.outer.carrier()),
            store.display(self.outer.pred_a()),
            self.verdict.inner,
            self.verdict.outer,
        );
        for (name, value) in self.env.vars.iter() {
            let _ = write!(line, "\t{name}={}", store.display(*value));
        }
        for (name, value) in self.env.params.iter() {
            let _ = write!(line, "\t${name}={}", store.display(*value));
        }
        line
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AbsolutenessReport {
    pub trials: u64,
    pub agreements: u64,
    pub disagreements: Vec<Disagreement>,
    /// Per-trial lines, only filled in verbose mode.
    pub lines: Vec<String>,
}

impl AbsolutenessReport {
    /// Combines reports of disjoint trial ranges, keeping trial order.
    pub fn merge(mut self, other: AbsolutenessReport) -> AbsolutenessReport {
        self.trials += other.trials;
        self.agreements += other.agreements;
        self.disagreements.extend(other.disagreements);
        self.disagreements.sort_by_key(|d| d.trial);
        self.lines.extend(other.lines);
        self
    }

    pub fn summary(&self) -> String {
        format!("{}/{} agree", self.agreements, self.trials)
    }
}

pub const MAX_FUZZ_STAGE: usize = 4;

/// Runs `config.trials` seeded trials.
pub fn fuzz_absoluteness(
    store: &mut SetStore,
    config: &FuzzConfig,
) -> Result<AbsolutenessReport, AbsError> {
    fuzz_trials(store, config, 0..config.trials)
}

/// Runs the given trial indices. Trial `i` depends only on `(seed, i)`, so
/// disjoint ranges can run on separate stores and be merged.
pub fn fuzz_trials(
    store: &mut SetStore,
    config: &FuzzConfig,
    trials: std::ops::Range<u64>,
) -> Result<AbsolutenessReport, AbsError> {
    let max_stage = config.max_stage.clamp(1, MAX_FUZZ_STAGE);
    let mut report = AbsolutenessReport::default();
    for trial in trials {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(trial);
        let case = random_case(store, &mut rng, max_stage, config.max_depth)?;
        let verdict = check_absolute(store, &case.formula, &case.env, &case.inner, &case.outer)?;
        report.trials += 1;
        if verdict.agree() {
            report.agreements += 1;
        } else {
            report.disagreements.push(Disagreement {
                trial,
                formula: case.formula.clone(),
                env: case.env.clone(),
                inner: case.inner,
                outer: case.outer,
                verdict,
            });
        }
        if config.verbose {
            report.lines.push(trial_line(store, trial, &case, verdict));
        }
    }
    Ok(report)
}

fn trial_line(store: &SetStore, trial: u64, case: &Case, verdict: Verdict) -> String {
    let mut line = format!(
        "trial={trial}\tinner={}\touter_card={}\tinner={}\touter={}\t{}\tformula={}",
        store.display(case.inner.carrier()),
        store.card(case.outer.carrier()),
        verdict.inner,
        verdict.outer,
        if verdict.agree() { "agree" } else { "DISAGREE" },
        case.formula.display(store),
    );
    for (name, value) in case.env.vars.iter() {
        let _ = write!(line, "\t{name}={}", store.display(*value));
    }
    for (name, value) in case.env.params.iter() {
        let _ = write!(line, "\t${name}={}", store.display(*value));
    }
    line
}

/// A generated absoluteness instance.
#[derive(Debug, Clone)]
pub struct Case {
    pub formula: Formula,
    pub env: Environment,
    pub inner: Universe,
    pub outer: Universe,
}

const FREE_VARS: [&str; 2] = ["u", "v"];
const PARAMS: [&str; 2] = ["a", "b"];

/// Draws an outer stage, a random transitive inner universe inside it, an
/// environment in the inner carrier and a bounded formula.
pub fn random_case(
    store: &mut SetStore,
    rng: &mut ChaCha8Rng,
    max_stage: usize,
    max_depth: usize,
) -> Result<Case, AbsError> {
    let n = rng.gen_range(1..=max_stage);
    let outer_carrier = store.v_stage(n)?;
    let elems = store.members(outer_carrier).to_vec();
    let a_elems: Vec<HfSet> = elems.iter().copied().filter(|_| rng.gen_bool(0.3)).collect();
    let a = store.make_set(a_elems);
    let outer = Universe::new(store, outer_carrier, a)?;

    let density = rng.gen_range(0.05..0.6);
    let mut seeds: Vec<HfSet> = elems.iter().copied().filter(|_| rng.gen_bool(density)).collect();
    if seeds.is_empty() && rng.gen_bool(0.95) {
        seeds.push(*elems.choose(rng).expect("stages from V_1 on are nonempty"));
    }
    let seed_set = store.make_set(seeds);
    let inner_carrier = store.transitive_closure(seed_set);
    let inner = Universe::restricted(store, inner_carrier, a);

    let pool = store.members(inner_carrier).to_vec();
    let mut env = Environment::new();
    let mut terms = Vec::new();
    if !pool.is_empty() {
        for v in FREE_VARS {
            env.vars.insert(v.into(), *pool.choose(rng).expect("non-empty"));
            terms.push(Term::var(v));
        }
        for p in PARAMS {
            env.params.insert(p.into(), *pool.choose(rng).expect("non-empty"));
            terms.push(Term::param(p));
        }
        terms.push(Term::Const(*pool.choose(rng).expect("non-empty")));
    }
    let mut gen = BoundedGen {
        rng,
        fresh: 0,
        max_depth,
    };
    let formula = gen.formula(&mut terms, 0);
    Ok(Case {
        formula,
        env,
        inner,
        outer,
    })
}

/// Random bounded formulas. Atoms, connectives and quantifiers are weighted
/// 3:2:2, the quantifier weight shrinking by a quarter at each level. The
/// root is never a bare atom.
struct BoundedGen<'r> {
    rng: &'r mut ChaCha8Rng,
    fresh: usize,
    max_depth: usize,
}

impl BoundedGen<'_> {
    fn term(&mut self, terms: &[Term]) -> Term {
        terms.choose(self.rng).expect("caller checks non-empty").clone()
    }

    fn atom(&mut self, terms: &[Term]) -> Formula {
        if terms.is_empty() {
            return if self.rng.gen_bool(0.5) { Formula::True } else { Formula::False };
        }
        match self.rng.gen_range(0..10) {
            0..=3 => Formula::Member(self.term(terms), self.term(terms)),
            4..=6 => Formula::Equal(self.term(terms), self.term(terms)),
            7 | 8 => Formula::PredA(self.term(terms)),
            _ => if self.rng.gen_bool(0.5) { Formula::True } else { Formula::False },
        }
    }

    fn formula(&mut self, terms: &mut Vec<Term>, depth: usize) -> Formula {
        if depth + 1 >= self.max_depth {
            return self.atom(terms);
        }
        let quant_weight = if terms.is_empty() { 0.0 } else { 2.0 * 0.75f64.powi(depth as i32) };
        let atom_weight = if depth == 0 { 0.0 } else { 3.0 };
        let roll = self.rng.gen_range(0.0..(atom_weight + 2.0 + quant_weight));
        if roll < atom_weight {
            return self.atom(terms);
        }
        if roll < atom_weight + 2.0 {
            return match self.rng.gen_range(0..4) {
                0 => Formula::not(self.formula(terms, depth + 1)),
                1 => Formula::and(self.formula(terms, depth + 1), self.formula(terms, depth + 1)),
                2 => Formula::or(self.formula(terms, depth + 1), self.formula(terms, depth + 1)),
                _ => Formula::implies(self.formula(terms, depth + 1), self.formula(terms, depth + 1)),
            };
        }
        self.fresh += 1;
        let var = format!("q{}", self.fresh);
        let bound = self.term(terms);
        terms.push(Term::var(&var));
        let body = self.formula(terms, depth + 1);
        terms.pop();
        if self.rng.gen_bool(0.5) {
            Formula::forall_in(&var, bound, body)
        } else {
            Formula::exists_in(&var, bound, body)
        }
    }
}

/// A sentence separating two universes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NonAbsoluteWitness {
    pub formula: Arc<Formula>,
    pub verdict: Verdict,
}

/// Variables used by [`find_nonabsolute`].
pub const SEARCH_VARS: [&str; 2] = ["x", "y"];

/// First sentence, in enumeration order up to `depth_budget`, whose truth
/// differs between `inner` and `outer`.
pub fn find_nonabsolute(
    store: &SetStore,
    inner: &Universe,
    outer: &Universe,
    depth_budget: usize,
) -> Result<Option<NonAbsoluteWitness>, AbsError> {
    let (ic, oc) = (inner.carrier(), outer.carrier());
    if !store.is_transitive(ic) || !store.is_transitive(oc) || !store.is_subset(ic, oc) {
        return Err(AbsError::NotStrictTransitivePair);
    }
    let env = Environment::new();
    let formulas = enumerate_formulas_with_budget(depth_budget, &SEARCH_VARS, &[], depth_budget)?;
    for f in formulas {
        // Bounded sentences cannot differ; skip them without evaluating.
        if f.is_bounded() || !f.is_sentence() {
            continue;
        }
        let verdict = Verdict {
            inner: eval(store, &f, &env, inner)?,
            outer: eval(store, &f, &env, outer)?,
        };
        if verdict.agree() {
            continue;
        }
        let recheck = Verdict {
            inner: reference_truth(store, &f, &HashMap::new(), inner),
            outer: reference_truth(store, &f, &HashMap::new(), outer),
        };
        assert_eq!(recheck, verdict, "evaluators disagree on {:?}", f);
        return Ok(Some(NonAbsoluteWitness { formula: f, verdict }));
    }
    Ok(None)
}

/// Plain recursive truth definition over an explicit assignment map. Kept
/// separate from [`eval`] so witnesses are confirmed by a second evaluator.
///
/// Panics on unbound names.
pub fn reference_truth(
    store: &SetStore,
    f: &Formula,
    assignment: &HashMap<Name, HfSet>,
    u: &Universe,
) -> bool {
    let value = |t: &Term| match t {
        Term::Const(c) => *c,
        Term::Var(v) | Term::Param(v) => assignment[v],
    };
    let over = |range: &[HfSet], v: &Name, g: &Formula| -> Vec<bool> {
        range
            .iter()
            .map(|x| {
                let mut inner = assignment.clone();
                inner.insert(v.clone(), *x);
                reference_truth(store, g, &inner, u)
            })
            .collect()
    };
    match f {
        Formula::Member(a, b) => store.members(value(b)).contains(&value(a)),
        Formula::Equal(a, b) => value(a) == value(b),
        Formula::PredA(t) => store.members(u.pred_a()).contains(&value(t)),
        Formula::True => true,
        Formula::False => false,
        Formula::Not(g) => !reference_truth(store, g, assignment, u),
        Formula::And(a, b) => {
            reference_truth(store, a, assignment, u) & reference_truth(store, b, assignment, u)
        }
        Formula::Or(a, b) => {
            reference_truth(store, a, assignment, u) | reference_truth(store, b, assignment, u)
        }
        Formula::Implies(a, b) => {
            !reference_truth(store, a, assignment, u) | reference_truth(store, b, assignment, u)
        }
        Formula::ForallIn(v, t, g) => over(store.members(value(t)), v, g).into_iter().all(|b| b),
        Formula::ExistsIn(v, t, g) => over(store.members(value(t)), v, g).into_iter().any(|b| b),
        Formula::Forall(v, g) => over(store.members(u.carrier()), v, g).into_iter().all(|b| b),
        Formula::Exists(v, g) => over(store.members(u.carrier()), v, g).into_iter().any(|b| b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse;

    #[test]
    fn bounded_example_agrees() {
        let mut st = SetStore::new();
        let e = st.empty();
        let f = parse(&mut st, "forall x in $a . x = x").unwrap();
        let a = st.singleton(e);
        let inner = Universe::stage(&mut st, 2, e).unwrap();
        let outer = Universe::stage(&mut st, 4, e).unwrap();
        let env = Environment::new().with_param("a", a);
        let v = check_absolute(&st, &f, &env, &inner, &outer).unwrap();
        assert_eq!(v, Verdict { inner: true, outer: true });
    }

    #[test]
    fn preconditions_are_reported_individually() {
        let mut st = SetStore::new();
        let e = st.empty();
        let inner = Universe::stage(&mut st, 2, e).unwrap();
        let outer = Universe::stage(&mut st, 4, e).unwrap();
        let f = parse(&mut st, "forall x in $a . x = x").unwrap();
        let far = st.v_stage(3).unwrap();
        let env = Environment::new().with_param("a", far);
        assert_eq!(
            check_absolute(&st, &f, &env, &inner, &outer),
            Err(AbsError::Preconditions(vec![Violation::Escapes("parameter `$a`".into())]))
        );

        let unbounded = parse(&mut st, "exists x . x = x").unwrap();
        let lumpy = st.parse_set("{{{}}}").unwrap();
        let bad_inner = Universe::restricted(&mut st, lumpy, e);
        let one = st.singleton(e);
        let pred_outer = Universe::stage(&mut st, 4, one).unwrap();
        let err = check_absolute(&st, &unbounded, &Environment::new(), &bad_inner, &pred_outer);
        assert_eq!(
            err,
            Err(AbsError::Preconditions(vec![Violation::NotBounded, Violation::InnerNotTransitive]))
        );

        let inner_no_pred = Universe::stage(&mut st, 2, e).unwrap();
        let g = parse(&mut st, "true").unwrap();
        assert_eq!(
            check_absolute(&st, &g, &Environment::new(), &inner_no_pred, &pred_outer),
            Err(AbsError::Preconditions(vec![Violation::PredicateMismatch]))
        );
        let big = Universe::stage(&mut st, 3, e).unwrap();
        let small = Universe::stage(&mut st, 2, e).unwrap();
        assert_eq!(
            check_absolute(&st, &g, &Environment::new(), &big, &small),
            Err(AbsError::Preconditions(vec![Violation::InnerNotContained]))
        );
    }

    #[test]
    fn constants_outside_inner_are_flagged() {
        let mut st = SetStore::new();
        let e = st.empty();
        let inner = Universe::stage(&mut st, 1, e).unwrap();
        let outer = Universe::stage(&mut st, 3, e).unwrap();
        let f = parse(&mut st, "exists x in {{}} . true").unwrap();
        assert!(matches!(
            check_absolute(&st, &f, &Environment::new(), &inner, &outer),
            Err(AbsError::Preconditions(v)) if matches!(v[..], [Violation::Escapes(_)])
        ));
    }

    #[test]
    fn fuzz_small_run_is_clean_and_deterministic() {
        let mut st = SetStore::new();
        let cfg = FuzzConfig {
            trials: 300,
            ..FuzzConfig::default()
        };
        let r1 = fuzz_absoluteness(&mut st, &cfg).unwrap();
        assert_eq!(r1.agreements, 300);
        assert!(r1.disagreements.is_empty());
        let mut other = SetStore::new();
        let r2 = fuzz_absoluteness(&mut other, &cfg).unwrap();
        assert_eq!(r1.trials, r2.trials);
        let verbose = FuzzConfig { verbose: true, ..cfg };
        let a = fuzz_absoluteness(&mut st, &verbose).unwrap();
        let b = fuzz_absoluteness(&mut other, &verbose).unwrap();
        assert_eq!(a.lines, b.lines);
        assert_eq!(a.lines.len(), 300);
    }

    #[test]
    fn split_runs_merge_to_the_whole() {
        let mut st = SetStore::new();
        let cfg = FuzzConfig {
            trials: 60,
            verbose: true,
            ..FuzzConfig::default()
        };
        let whole = fuzz_absoluteness(&mut st, &cfg).unwrap();
        let mut s1 = SetStore::new();
        let mut s2 = SetStore::new();
        let left = fuzz_trials(&mut s1, &cfg, 0..25).unwrap();
        let right = fuzz_trials(&mut s2, &cfg, 25..60).unwrap();
        let merged = left.merge(right);
        assert_eq!(merged.trials, whole.trials);
        assert_eq!(merged.agreements, whole.agreements);
        assert_eq!(merged.lines, whole.lines);
    }

    #[test]
    fn generated_formulas_are_bounded() {
        let mut st = SetStore::new();
        for t in 0..500 {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            rng.set_stream(t);
            let case = random_case(&mut st, &mut rng, 4, 5).unwrap();
            assert!(case.formula.is_bounded());
            assert!(st.is_transitive(case.inner.carrier()));
        }
    }

    #[test]
    fn generator_is_not_degenerate() {
        let mut st = SetStore::new();
        let (mut quantified, mut true_inner) = (0, 0);
        for t in 0..2000 {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            rng.set_stream(t);
            let case = random_case(&mut st, &mut rng, 4, 4).unwrap();
            if format!("{:?}", case.formula).contains("In(") {
                quantified += 1;
            }
            if eval(&st, &case.formula, &case.env, &case.inner).unwrap() {
                true_inner += 1;
            }
        }
        assert!(quantified > 1000, "{quantified}");
        assert!((500..1500).contains(&true_inner), "{true_inner}");
    }

    #[test]
    fn v1_v2_witness() {
        let mut st = SetStore::new();
        let e = st.empty();
        let v1 = Universe::stage(&mut st, 1, e).unwrap();
        let v2 = Universe::stage(&mut st, 2, e).unwrap();
        let w = find_nonabsolute(&st, &v1, &v2, 3).unwrap().unwrap();
        assert_eq!(w.formula.display(&st).to_string(), "exists x . exists y . x in y");
        assert_eq!(w.verdict, Verdict { inner: false, outer: true });
        assert!(!w.formula.is_bounded());
    }

    #[test]
    fn identical_universes_have_no_witness() {
        let mut st = SetStore::new();
        let e = st.empty();
        let v2 = Universe::stage(&mut st, 2, e).unwrap();
        assert_eq!(find_nonabsolute(&st, &v2, &v2, 3).unwrap(), None);
    }
}
