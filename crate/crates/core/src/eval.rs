//! Tarskian truth for formulas over finite universes `(U, ∈, A)`.
//!
//! Membership is genuine hereditarily-finite membership. Bounded quantifiers
//! range over the members of their bound, whether or not those members lie in
//! the carrier; unbounded quantifiers range over the carrier, so "unbounded"
//! always means "relative to the chosen universe". Evaluation short-circuits
//! and iterates members in canonical order.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::kernel::{HfSet, KernelError, SetStore};
use crate::logic::{Formula, Name, Term};

/// A finite structure `(carrier, ∈, pred_a)` with `pred_a ⊆ carrier`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Universe {
    carrier: HfSet,
    pred_a: HfSet,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(Name),
    #[error("unbound parameter `${0}`")]
    UnboundParameter(Name),
    #[error("value of `{0}` lies outside the universe's carrier")]
    OutsideCarrier(Name),
    #[error("a quantifier bound has members outside the universe's carrier")]
    BoundEscapesCarrier,
    #[error("predicate interpretation is not a subset of the carrier")]
    PredicateNotSubset,
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

impl Universe {
    pub fn new(store: &SetStore, carrier: HfSet, pred_a: HfSet) -> Result<Self, EvalError> {
        if !store.is_subset(pred_a, carrier) {
            return Err(EvalError::PredicateNotSubset);
        }
        Ok(Universe { carrier, pred_a })
    }

    /// `(V_n, ∈, A ∩ V_n)`.
    pub fn stage(store: &mut SetStore, n: usize, a: HfSet) -> Result<Self, EvalError> {
        let carrier = store.v_stage(n)?;
        let pred_a = restrict(store, a, carrier);
        Ok(Universe { carrier, pred_a })
    }

    /// `(carrier, ∈, a ∩ carrier)`.
    pub fn restricted(store: &mut SetStore, carrier: HfSet, a: HfSet) -> Self {
        let pred_a = restrict(store, a, carrier);
        Universe { carrier, pred_a }
    }

    pub fn carrier(&self) -> HfSet {
        self.carrier
    }

    pub fn pred_a(&self) -> HfSet {
        self.pred_a
    }
}

/// `a ∩ carrier`.
pub fn restrict(store: &mut SetStore, a: HfSet, carrier: HfSet) -> HfSet {
    let kept: Vec<HfSet> = store
        .members(a)
        .iter()
        .copied()
        .filter(|x| store.contains(carrier, *x))
        .collect();
    store.make_set(kept)
}

/// Variable and parameter assignments.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Environment {
    pub vars: BTreeMap<Name, HfSet>,
    pub params: BTreeMap<Name, HfSet>,
}

impl Environment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_var(mut self, name: &str, value: HfSet) -> Self {
        self.vars.insert(name.into(), value);
        self
    }

    pub fn with_param(mut self, name: &str, value: HfSet) -> Self {
        self.params.insert(name.into(), value);
        self
    }

    pub fn values(&self) -> impl Iterator<Item = (&Name, HfSet)> {
        self.vars
            .iter()
            .chain(self.params.iter())
            .map(|(k, v)| (k, *v))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalOptions {
    /// Reject environment values outside the carrier and bounds whose
    /// members escape it.
    pub strict: bool,
}

/// Truth of `f` under `env` in `u`.
pub fn eval(
    store: &SetStore,
    f: &Formula,
    env: &Environment,
    u: &Universe,
) -> Result<bool, EvalError> {
    eval_with(store, f, env, u, EvalOptions::default())
}

pub fn eval_with(
    store: &SetStore,
    f: &Formula,
    env: &Environment,
    u: &Universe,
    opts: EvalOptions,
) -> Result<bool, EvalError> {
    if opts.strict {
        let fv = f.free_vars();
        for v in &fv.vars {
            let value = env
                .vars
                .get(v)
                .ok_or_else(|| EvalError::UnboundVariable(v.clone()))?;
            if !store.contains(u.carrier, *value) {
                return Err(EvalError::OutsideCarrier(v.clone()));
            }
        }
        for p in &fv.params {
            let value = env
                .params
                .get(p)
                .ok_or_else(|| EvalError::UnboundParameter(p.clone()))?;
            if !store.contains(u.carrier, *value) {
                return Err(EvalError::OutsideCarrier(p.clone()));
            }
        }
    }
    let mut ev = Evaluator {
        store,
        env,
        universe: u,
        strict: opts.strict,
        scope: Vec::new(),
    };
    ev.truth(f)
}

struct Evaluator<'a> {
    store: &'a SetStore,
    env: &'a Environment,
    universe: &'a Universe,
    strict: bool,
    scope: Vec<(Name, HfSet)>,
}

impl Evaluator<'_> {
    fn term(&self, t: &Term) -> Result<HfSet, EvalError> {
        match t {
            Term::Const(s) => Ok(*s),
            Term::Var(v) => self
                .scope
                .iter()
                .rev()
                .find(|(n, _)| Arc::ptr_eq(n, v) || n == v)
                .map(|(_, s)| *s)
                .or_else(|| self.env.vars.get(v).copied())
                .ok_or_else(|| EvalError::UnboundVariable(v.clone())),
            Term::Param(p) => self
                .env
                .params
                .get(p)
                .copied()
                .ok_or_else(|| EvalError::UnboundParameter(p.clone())),
        }
    }

    fn quantify(
        &mut self,
        v: &Name,
        range: HfSet,
        body: &Formula,
        exists: bool,
    ) -> Result<bool, EvalError> {
        let store = self.store;
        for &x in store.members(range) {
            self.scope.push((v.clone(), x));
            let t = self.truth(body);
            self.scope.pop();
            if t? == exists {
                return Ok(exists);
            }
        }
        Ok(!exists)
    }

    fn bound(&self, t: &Term) -> Result<HfSet, EvalError> {
        let b = self.term(t)?;
        if self.strict
            && !self
                .store
                .members(b)
                .iter()
                .all(|m| self.store.contains(self.universe.carrier, *m))
        {
            return Err(EvalError::BoundEscapesCarrier);
        }
        Ok(b)
    }

    fn truth(&mut self, f: &Formula) -> Result<bool, EvalError> {
        Ok(match f {
            Formula::Member(a, b) => {
                let (a, b) = (self.term(a)?, self.term(b)?);
                self.store.contains(b, a)
            }
            Formula::Equal(a, b) => self.term(a)? == self.term(b)?,
            Formula::PredA(t) => {
                let x = self.term(t)?;
                self.store.contains(self.universe.pred_a, x)
            }
            Formula::True => true,
            Formula::False => false,
            Formula::Not(g) => !self.truth(g)?,
            Formula::And(a, b) => self.truth(a)? && self.truth(b)?,
            Formula::Or(a, b) => self.truth(a)? || self.truth(b)?,
            Formula::Implies(a, b) => !self.truth(a)? || self.truth(b)?,
            Formula::ForallIn(v, t, g) => {
                let range = self.bound(t)?;
                self.quantify(v, range, g, false)?
            }
            Formula::ExistsIn(v, t, g) => {
                let range = self.bound(t)?;
                self.quantify(v, range, g, true)?
            }
            Formula::Forall(v, g) => self.quantify(v, self.universe.carrier, g, false)?,
            Formula::Exists(v, g) => self.quantify(v, self.universe.carrier, g, true)?,
        })
    }
}

/// Upper bound on atomic evaluations: quantifier ranges multiply, branches add.
///
/// A bound term's range is its cardinality when it is a constant; otherwise
/// the largest cardinality of a carrier element.
pub fn eval_cost(store: &SetStore, f: &Formula, u: &Universe) -> u128 {
    let widest = store
        .members(u.carrier)
        .iter()
        .map(|m| store.card(*m))
        .max()
        .unwrap_or(0) as u128;
    cost(store, f, store.card(u.carrier) as u128, widest)
}

fn cost(store: &SetStore, f: &Formula, carrier: u128, widest: u128) -> u128 {
    let c = |g: &Formula| cost(store, g, carrier, widest);
    match f {
        Formula::Member(..)
        | Formula::Equal(..)
        | Formula::PredA(_)
        | Formula::True
        | Formula::False => 1,
        Formula::Not(g) => c(g),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            c(a).saturating_add(c(b))
        }
        Formula::Forall(_, g) | Formula::Exists(_, g) => carrier.saturating_mul(c(g)),
        Formula::ForallIn(_, t, g) | Formula::ExistsIn(_, t, g) => {
            let range = match t {
                Term::Const(s) => store.card(*s) as u128,
                _ => widest,
            };
            range.saturating_mul(c(g))
        }
    }
}
