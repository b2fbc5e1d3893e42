//! First-order formulas over the signature `{∈, =, A}`.
//!
//! Concrete syntax (ASCII):
//!
//! ```text
//! formula := quant | impl
//! quant   := ("forall" | "exists") ident ["in" term] "." formula
//! impl    := disj ["->" impl]
//! disj    := conj {"|" conj}
//! conj    := neg {"&" neg}
//! neg     := "!" neg | atom
//! atom    := "true" | "false" | "A(" term ")" | term ("in" | "=") term | "(" formula ")"
//! term    := ident | "$" ident | set-literal
//! ```
//!
//! A quantifier body extends as far right as possible. `A` is reserved for the
//! predicate symbol. The parser renames a bound variable when an enclosing
//! quantifier already binds the same name, so parsed formulas never shadow.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::kernel::{HfSet, SetStore};

/// Variable and parameter names.
pub type Name = Arc<str>;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Var(Name),
    Const(HfSet),
    /// Spelled `$name`; resolved from the environment at evaluation time.
    Param(Name),
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(name.into())
    }

    pub fn param(name: &str) -> Term {
        Term::Param(name.into())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula {
    Member(Term, Term),
    Equal(Term, Term),
    PredA(Term),
    True,
    False,
    Not(Arc<Formula>),
    And(Arc<Formula>, Arc<Formula>),
    Or(Arc<Formula>, Arc<Formula>),
    Implies(Arc<Formula>, Arc<Formula>),
    ForallIn(Name, Term, Arc<Formula>),
    ExistsIn(Name, Term, Arc<Formula>),
    Forall(Name, Arc<Formula>),
    Exists(Name, Arc<Formula>),
}

impl Formula {
    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Arc::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Arc::new(a), Arc::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Arc::new(a), Arc::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Arc::new(a), Arc::new(b))
    }

    pub fn forall(v: &str, body: Formula) -> Formula {
        Formula::Forall(v.into(), Arc::new(body))
    }

    pub fn exists(v: &str, body: Formula) -> Formula {
        Formula::Exists(v.into(), Arc::new(body))
    }

    pub fn forall_in(v: &str, bound: Term, body: Formula) -> Formula {
        Formula::ForallIn(v.into(), bound, Arc::new(body))
    }

    pub fn exists_in(v: &str, bound: Term, body: Formula) -> Formula {
        Formula::ExistsIn(v.into(), bound, Arc::new(body))
    }

    /// Left-nested conjunction; `true` when empty.
    pub fn conjoin<I: IntoIterator<Item = Formula>>(parts: I) -> Formula {
        parts
            .into_iter()
            .reduce(Formula::and)
            .unwrap_or(Formula::True)
    }

    /// Left-nested disjunction; `false` when empty.
    pub fn disjoin<I: IntoIterator<Item = Formula>>(parts: I) -> Formula {
        parts
            .into_iter()
            .reduce(Formula::or)
            .unwrap_or(Formula::False)
    }

    /// AST depth: atoms have depth 1; bound terms do not count.
    pub fn depth(&self) -> usize {
        match self {
            Formula::Member(..)
            | Formula::Equal(..)
            | Formula::PredA(_)
            | Formula::True
            | Formula::False => 1,
            Formula::Not(f)
            | Formula::ForallIn(_, _, f)
            | Formula::ExistsIn(_, _, f)
            | Formula::Forall(_, f)
            | Formula::Exists(_, f) => 1 + f.depth(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }

    /// True iff every quantifier has the form `Qx ∈ t`.
    pub fn is_bounded(&self) -> bool {
        match self {
            Formula::Forall(..) | Formula::Exists(..) => false,
            Formula::Member(..)
            | Formula::Equal(..)
            | Formula::PredA(_)
            | Formula::True
            | Formula::False => true,
            Formula::Not(f) | Formula::ForallIn(_, _, f) | Formula::ExistsIn(_, _, f) => {
                f.is_bounded()
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.is_bounded() && b.is_bounded()
            }
        }
    }

    /// Whether some quantifier inside binds `v`.
    pub fn binds(&self, v: &str) -> bool {
        match self {
            Formula::Member(..)
            | Formula::Equal(..)
            | Formula::PredA(_)
            | Formula::True
            | Formula::False => false,
            Formula::Not(f) => f.binds(v),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.binds(v) || b.binds(v)
            }
            Formula::ForallIn(x, _, f)
            | Formula::ExistsIn(x, _, f)
            | Formula::Forall(x, f)
            | Formula::Exists(x, f) => &**x == v || f.binds(v),
        }
    }

    /// Free variables and parameter names.
    pub fn free_vars(&self) -> FreeVars {
        let mut out = FreeVars::default();
        let mut bound = Vec::new();
        collect_free(self, &mut bound, &mut out);
        out
    }

    pub fn is_sentence(&self) -> bool {
        let fv = self.free_vars();
        fv.vars.is_empty() && fv.params.is_empty()
    }

    /// Rewrites every term, keeping the shape.
    pub fn map_terms(&self, f: &mut dyn FnMut(&Term) -> Term) -> Formula {
        let sub = |g: &Arc<Formula>, f: &mut dyn FnMut(&Term) -> Term| Arc::new(g.map_terms(f));
        match self {
            Formula::Member(a, b) => Formula::Member(f(a), f(b)),
            Formula::Equal(a, b) => Formula::Equal(f(a), f(b)),
            Formula::PredA(t) => Formula::PredA(f(t)),
            Formula::True => Formula::True,
            Formula::False => Formula::False,
            Formula::Not(g) => Formula::Not(sub(g, f)),
            Formula::And(a, b) => Formula::And(sub(a, f), sub(b, f)),
            Formula::Or(a, b) => Formula::Or(sub(a, f), sub(b, f)),
            Formula::Implies(a, b) => Formula::Implies(sub(a, f), sub(b, f)),
            Formula::ForallIn(v, t, g) => Formula::ForallIn(v.clone(), f(t), sub(g, f)),
            Formula::ExistsIn(v, t, g) => Formula::ExistsIn(v.clone(), f(t), sub(g, f)),
            Formula::Forall(v, g) => Formula::Forall(v.clone(), sub(g, f)),
            Formula::Exists(v, g) => Formula::Exists(v.clone(), sub(g, f)),
        }
    }

    /// Replaces free occurrences of variable `from` by variable `to`.
    ///
    /// The caller guarantees `to` is not bound anywhere in `self`.
    pub fn rename_free(&self, from: &str, to: &str) -> Formula {
        let swap = |t: &Term| match t {
            Term::Var(v) if &**v == from => Term::var(to),
            other => other.clone(),
        };
        let sub = |g: &Arc<Formula>| Arc::new(g.rename_free(from, to));
        match self {
            Formula::Member(a, b) => Formula::Member(swap(a), swap(b)),
            Formula::Equal(a, b) => Formula::Equal(swap(a), swap(b)),
            Formula::PredA(t) => Formula::PredA(swap(t)),
            Formula::True | Formula::False => self.clone(),
            Formula::Not(g) => Formula::Not(sub(g)),
            Formula::And(a, b) => Formula::And(sub(a), sub(b)),
            Formula::Or(a, b) => Formula::Or(sub(a), sub(b)),
            Formula::Implies(a, b) => Formula::Implies(sub(a), sub(b)),
            Formula::ForallIn(v, t, g) if &**v == from => {
                Formula::ForallIn(v.clone(), swap(t), g.clone())
            }
            Formula::ExistsIn(v, t, g) if &**v == from => {
                Formula::ExistsIn(v.clone(), swap(t), g.clone())
            }
            Formula::Forall(v, _) | Formula::Exists(v, _) if &**v == from => self.clone(),
            Formula::ForallIn(v, t, g) => Formula::ForallIn(v.clone(), swap(t), sub(g)),
            Formula::ExistsIn(v, t, g) => Formula::ExistsIn(v.clone(), swap(t), sub(g)),
            Formula::Forall(v, g) => Formula::Forall(v.clone(), sub(g)),
            Formula::Exists(v, g) => Formula::Exists(v.clone(), sub(g)),
        }
    }

    /// Printer that resolves set constants through `store`.
    pub fn display<'a>(&'a self, store: &'a SetStore) -> FormulaDisplay<'a> {
        FormulaDisplay {
            store,
            formula: self,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FreeVars {
    pub vars: BTreeSet<Name>,
    pub params: BTreeSet<Name>,
}

fn collect_term(t: &Term, bound: &[Name], out: &mut FreeVars) {
    match t {
        Term::Var(v) if !bound.contains(v) => {
            out.vars.insert(v.clone());
        }
        Term::Param(p) => {
            out.params.insert(p.clone());
        }
        _ => {}
    }
}

fn collect_free(f: &Formula, bound: &mut Vec<Name>, out: &mut FreeVars) {
    match f {
        Formula::Member(a, b) | Formula::Equal(a, b) => {
            collect_term(a, bound, out);
            collect_term(b, bound, out);
        }
        Formula::PredA(t) => collect_term(t, bound, out),
        Formula::True | Formula::False => {}
        Formula::Not(g) => collect_free(g, bound, out),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            collect_free(a, bound, out);
            collect_free(b, bound, out);
        }
        Formula::ForallIn(v, t, g) | Formula::ExistsIn(v, t, g) => {
            collect_term(t, bound, out);
            bound.push(v.clone());
            collect_free(g, bound, out);
            bound.pop();
        }
        Formula::Forall(v, g) | Formula::Exists(v, g) => {
            bound.push(v.clone());
            collect_free(g, bound, out);
            bound.pop();
        }
    }
}

// ---------------------------------------------------------------------------
// Printing

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Level {
    Formula,
    Impl,
    Disj,
    Conj,
    Neg,
}

pub struct FormulaDisplay<'a> {
    store: &'a SetStore,
    formula: &'a Formula,
}

impl fmt::Display for FormulaDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_formula(self.store, self.formula, Level::Formula, f)
    }
}

pub struct TermDisplay<'a> {
    store: &'a SetStore,
    term: &'a Term,
}

impl fmt::Display for TermDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.term {
            Term::Var(v) => f.write_str(v),
            Term::Param(p) => write!(f, "${p}"),
            Term::Const(s) => write!(f, "{}", self.store.display(*s)),
        }
    }
}

impl Term {
    pub fn display<'a>(&'a self, store: &'a SetStore) -> TermDisplay<'a> {
        TermDisplay { store, term: self }
    }
}

fn write_formula(
    store: &SetStore,
    formula: &Formula,
    ctx: Level,
    f: &mut fmt::Formatter<'_>,
) -> fmt::Result {
    let own = match formula {
        Formula::ForallIn(..) | Formula::ExistsIn(..) | Formula::Forall(..) | Formula::Exists(..) => {
            Level::Formula
        }
        Formula::Implies(..) => Level::Impl,
        Formula::Or(..) => Level::Disj,
        Formula::And(..) => Level::Conj,
        _ => Level::Neg,
    };
    if own < ctx {
        f.write_str("(")?;
        write_formula(store, formula, Level::Formula, f)?;
        return f.write_str(")");
    }
    let t = |term: &'_ Term| term.display(store).to_string();
    match formula {
        Formula::Member(a, b) => write!(f, "{} in {}", t(a), t(b)),
        Formula::Equal(a, b) => write!(f, "{} = {}", t(a), t(b)),
        Formula::PredA(a) => write!(f, "A({})", t(a)),
        Formula::True => f.write_str("true"),
        Formula::False => f.write_str("false"),
        Formula::Not(g) => {
            f.write_str("!")?;
            write_formula(store, g, Level::Neg, f)
        }
        Formula::And(a, b) => {
            write_formula(store, a, Level::Conj, f)?;
            f.write_str(" & ")?;
            write_formula(store, b, Level::Neg, f)
        }
        Formula::Or(a, b) => {
            write_formula(store, a, Level::Disj, f)?;
            f.write_str(" | ")?;
            write_formula(store, b, Level::Conj, f)
        }
        Formula::Implies(a, b) => {
            write_formula(store, a, Level::Disj, f)?;
            f.write_str(" -> ")?;
            write_formula(store, b, Level::Impl, f)
        }
        Formula::ForallIn(v, bound, g) => {
            write!(f, "forall {v} in {} . ", t(bound))?;
            write_formula(store, g, Level::Formula, f)
        }
        Formula::ExistsIn(v, bound, g) => {
            write!(f, "exists {v} in {} . ", t(bound))?;
            write_formula(store, g, Level::Formula, f)
        }
        Formula::Forall(v, g) => {
            write!(f, "forall {v} . ")?;
            write_formula(store, g, Level::Formula, f)
        }
        Formula::Exists(v, g) => {
            write!(f, "exists {v} . ")?;
            write_formula(store, g, Level::Formula, f)
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing

/// Syntax error with a 1-based position and the tokens that would have fit.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("syntax error at line {line}, column {column}: found {found}, expected {}", .expected.join(" or "))]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub found: String,
    pub expected: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Param(String),
    Set(HfSet),
    Forall,
    Exists,
    In,
    True,
    False,
    PredA,
    LParen,
    RParen,
    Dot,
    Eq,
    And,
    Or,
    Not,
    Arrow,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Param(s) => format!("parameter `${s}`"),
            Tok::Set(_) => "set literal".into(),
            Tok::Forall => "`forall`".into(),
            Tok::Exists => "`exists`".into(),
            Tok::In => "`in`".into(),
            Tok::True => "`true`".into(),
            Tok::False => "`false`".into(),
            Tok::PredA => "`A`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Eq => "`=`".into(),
            Tok::And => "`&`".into(),
            Tok::Or => "`|`".into(),
            Tok::Not => "`!`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn position(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(offset, |nl| offset - nl - 1) + 1;
    (line, column)
}

fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_'
}

fn is_ident_char(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

fn lex(store: &mut SetStore, text: &str) -> Result<Vec<Spanned>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err_at = |offset: usize, found: String, expected: &[&str]| {
        let (line, column) = position(text, offset);
        ParseError {
            line,
            column,
            found,
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    };
    while i < bytes.len() {
        let b = bytes[i];
        if b.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match b {
            b'(' => {
                i += 1;
                Tok::LParen
            }
            b')' => {
                i += 1;
                Tok::RParen
            }
            b'.' => {
                i += 1;
                Tok::Dot
            }
            b'=' => {
                i += 1;
                Tok::Eq
            }
            b'&' => {
                i += 1;
                Tok::And
            }
            b'|' => {
                i += 1;
                Tok::Or
            }
            b'!' => {
                i += 1;
                Tok::Not
            }
            b'-' if bytes.get(i + 1) == Some(&b'>') => {
                i += 2;
                Tok::Arrow
            }
            b'{' => {
                let set = store.parse_set_at(bytes, &mut i).map_err(|e| {
                    let found = bytes
                        .get(e.offset)
                        .map_or("end of input".to_string(), |c| format!("`{}`", *c as char));
                    err_at(e.offset, found, &["set literal"])
                })?;
                Tok::Set(set)
            }
            b'$' => {
                i += 1;
                if !bytes.get(i).is_some_and(|c| is_ident_start(*c)) {
                    return Err(err_at(i, "`$` without a name".into(), &["identifier"]));
                }
                let s = i;
                while bytes.get(i).is_some_and(|c| is_ident_char(*c)) {
                    i += 1;
                }
                Tok::Param(text[s..i].to_string())
            }
            c if is_ident_start(c) => {
                while bytes.get(i).is_some_and(|c| is_ident_char(*c)) {
                    i += 1;
                }
                match &text[start..i] {
                    "forall" => Tok::Forall,
                    "exists" => Tok::Exists,
                    "in" => Tok::In,
                    "true" => Tok::True,
                    "false" => Tok::False,
                    "A" => Tok::PredA,
                    word => Tok::Ident(word.to_string()),
                }
            }
            _ => {
                let c = text[i..].chars().next().expect("in bounds");
                return Err(err_at(i, format!("`{c}`"), &["a formula token"]));
            }
        };
        let (line, column) = position(text, start);
        out.push(Spanned { tok, line, column });
    }
    let (line, column) = position(text, bytes.len());
    out.push(Spanned {
        tok: Tok::End,
        line,
        column,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    /// Enclosing binders: (name as written, name after renaming).
    scope: Vec<(String, Name)>,
    taken: HashSet<String>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        let s = &self.toks[self.pos];
        ParseError {
            line: s.line,
            column: s.column,
            found: s.tok.describe(),
            expected: expected.iter().map(|e| e.to_string()).collect(),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&[what]))
        }
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            Tok::Forall | Tok::Exists => self.quant(),
            _ => self.implication(),
        }
    }

    fn quant(&mut self) -> Result<Formula, ParseError> {
        let universal = self.bump() == Tok::Forall;
        let written = match self.bump() {
            Tok::Ident(v) => v,
            _ => {
                self.pos -= 1;
                return Err(self.error(&["identifier"]));
            }
        };
        let bound = if *self.peek() == Tok::In {
            self.bump();
            Some(self.term()?)
        } else {
            None
        };
        self.expect(Tok::Dot, "`.`")?;
        let name = self.bind(&written);
        self.scope.push((written, name.clone()));
        let body = self.formula();
        self.scope.pop();
        let body = Arc::new(body?);
        Ok(match (universal, bound) {
            (true, Some(t)) => Formula::ForallIn(name, t, body),
            (false, Some(t)) => Formula::ExistsIn(name, t, body),
            (true, None) => Formula::Forall(name, body),
            (false, None) => Formula::Exists(name, body),
        })
    }

    /// Picks the internal name for a new binder, renaming on shadowing.
    fn bind(&mut self, written: &str) -> Name {
        if !self.scope.iter().any(|(w, _)| w == written) {
            return written.into();
        }
        let fresh = (1..)
            .map(|k| format!("{written}_{k}"))
            .find(|c| !self.taken.contains(c))
            .expect("unbounded supply of names");
        self.taken.insert(fresh.clone());
        fresh.into()
    }

    fn implication(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.disjunction()?;
        if *self.peek() == Tok::Arrow {
            self.bump();
            let rhs = self.implication()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Formula, ParseError> {
        let mut acc = self.conjunction()?;
        while *self.peek() == Tok::Or {
            self.bump();
            let rhs = self.conjunction()?;
            acc = Formula::or(acc, rhs);
        }
        Ok(acc)
    }

    fn conjunction(&mut self) -> Result<Formula, ParseError> {
        let mut acc = self.negation()?;
        while *self.peek() == Tok::And {
            self.bump();
            let rhs = self.negation()?;
            acc = Formula::and(acc, rhs);
        }
        Ok(acc)
    }

    fn negation(&mut self) -> Result<Formula, ParseError> {
        if *self.peek() == Tok::Not {
            self.bump();
            return Ok(Formula::not(self.negation()?));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            Tok::True => {
                self.bump();
                Ok(Formula::True)
            }
            Tok::False => {
                self.bump();
                Ok(Formula::False)
            }
            Tok::PredA => {
                self.bump();
                self.expect(Tok::LParen, "`(`")?;
                let t = self.term()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Formula::PredA(t))
            }
            Tok::LParen => {
                self.bump();
                let f = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            }
            Tok::Ident(_) | Tok::Param(_) | Tok::Set(_) => {
                let lhs = self.term()?;
                match self.bump() {
                    Tok::In => Ok(Formula::Member(lhs, self.term()?)),
                    Tok::Eq => Ok(Formula::Equal(lhs, self.term()?)),
                    _ => {
                        self.pos -= 1;
                        Err(self.error(&["`in`", "`=`"]))
                    }
                }
            }
            _ => Err(self.error(&[
                "`!`", "`(`", "`true`", "`false`", "`A`", "term", "`forall`", "`exists`",
            ])),
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        match self.peek().clone() {
            Tok::Ident(v) => {
                self.bump();
                let resolved = self
                    .scope
                    .iter()
                    .rev()
                    .find(|(w, _)| *w == v)
                    .map(|(_, n)| n.clone())
                    .unwrap_or_else(|| v.as_str().into());
                Ok(Term::Var(resolved))
            }
            Tok::Param(p) => {
                self.bump();
                Ok(Term::Param(p.as_str().into()))
            }
            Tok::Set(s) => {
                self.bump();
                Ok(Term::Const(s))
            }
            _ => Err(self.error(&["identifier", "`$name`", "set literal"])),
        }
    }
}

/// Parses a formula, interning set literals into `store`.
pub fn parse(store: &mut SetStore, text: &str) -> Result<Formula, ParseError> {
    let toks = lex(store, text)?;
    let taken = toks
        .iter()
        .filter_map(|s| match &s.tok {
            Tok::Ident(v) => Some(v.clone()),
            _ => None,
        })
        .collect();
    let mut p = Parser {
        toks,
        pos: 0,
        scope: Vec::new(),
        taken,
    };
    let f = p.formula()?;
    if *p.peek() != Tok::End {
        return Err(p.error(&["end of input", "`&`", "`|`", "`->`"]));
    }
    Ok(f)
}

// ---------------------------------------------------------------------------
// Enumeration

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LogicError {
    #[error("formula depth {requested} exceeds the enumeration budget {budget}")]
    DepthBudget { requested: usize, budget: usize },
}

/// Largest depth [`enumerate_formulas`] accepts.
pub const DEFAULT_DEPTH_BUDGET: usize = 4;

type Shared = Arc<Vec<Arc<Formula>>>;

/// All formulas up to `depth` over the given variables and constants.
///
/// Output is grouped by depth, shallowest first, so the depth-`d` stream
/// begins with the complete depth-`d-1` stream. Within one depth the order is
/// `∃x`, `∀x`, `∃x∈t`, `∀x∈t`, `¬`, `∧`, `∨`, `→`. Quantifiers never bind a
/// variable that their body already binds, and `Qx∈x` is skipped.
pub fn enumerate_formulas(
    depth: usize,
    vars: &[&str],
    params: &[HfSet],
) -> Result<Box<dyn Iterator<Item = Arc<Formula>>>, LogicError> {
    enumerate_formulas_with_budget(depth, vars, params, DEFAULT_DEPTH_BUDGET)
}

pub fn enumerate_formulas_with_budget(
    depth: usize,
    vars: &[&str],
    params: &[HfSet],
    budget: usize,
) -> Result<Box<dyn Iterator<Item = Arc<Formula>>>, LogicError> {
    if depth > budget {
        return Err(LogicError::DepthBudget {
            requested: depth,
            budget,
        });
    }
    if depth == 0 {
        return Ok(Box::new(std::iter::empty()));
    }
    let vars: Arc<Vec<Name>> = Arc::new(vars.iter().map(|v| Name::from(*v)).collect());
    let mut terms: Vec<Term> = vars.iter().map(|v| Term::Var(v.clone())).collect();
    terms.extend(params.iter().map(|p| Term::Const(*p)));
    let terms = Arc::new(terms);

    let mut prior: Vec<Arc<Formula>> = Vec::new();
    let mut last: Shared = Arc::new(Vec::new());
    for d in 1..depth {
        let level: Vec<Arc<Formula>> =
            level_stream(d, &vars, &terms, &Arc::new(prior.clone()), &last).collect();
        prior.extend(level.iter().cloned());
        last = Arc::new(level);
    }
    let prior = Arc::new(prior);
    let head = prior.as_ref().clone().into_iter();
    Ok(Box::new(head.chain(level_stream(
        depth, &vars, &terms, &prior, &last,
    ))))
}

/// Formulas of depth exactly `d`, given everything shallower (`prior`) and
/// the depth `d-1` slice (`last`).
fn level_stream(
    d: usize,
    vars: &Arc<Vec<Name>>,
    terms: &Arc<Vec<Term>>,
    prior: &Shared,
    last: &Shared,
) -> Box<dyn Iterator<Item = Arc<Formula>>> {
    if d == 1 {
        return Box::new(atoms(terms).into_iter().map(Arc::new));
    }
    let quantified = |bounded: bool, exists: bool| {
        let (vars, terms, last) = (vars.clone(), terms.clone(), last.clone());
        (0..vars.len()).flat_map(move |vi| {
            let v = vars[vi].clone();
            let bounds: Vec<Option<Term>> = if bounded {
                terms
                    .iter()
                    .filter(|t| **t != Term::Var(v.clone()))
                    .cloned()
                    .map(Some)
                    .collect()
            } else {
                vec![None]
            };
            let last = last.clone();
            bounds.into_iter().flat_map(move |bound| {
                let v = v.clone();
                let last = last.clone();
                (0..last.len()).filter_map(move |i| {
                    let body = &last[i];
                    if body.binds(&v) {
                        return None;
                    }
                    let body = body.clone();
                    Some(Arc::new(match (&bound, exists) {
                        (None, true) => Formula::Exists(v.clone(), body),
                        (None, false) => Formula::Forall(v.clone(), body),
                        (Some(t), true) => Formula::ExistsIn(v.clone(), t.clone(), body),
                        (Some(t), false) => Formula::ForallIn(v.clone(), t.clone(), body),
                    }))
                })
            })
        })
    };
    let negations = {
        let last = last.clone();
        (0..last.len()).map(move |i| Arc::new(Formula::Not(last[i].clone())))
    };
    let binary = |op: fn(Arc<Formula>, Arc<Formula>) -> Formula| {
        let prior = prior.clone();
        let n = prior.len();
        (0..n).flat_map(move |i| {
            let prior = prior.clone();
            (0..n).filter_map(move |j| {
                let (a, b) = (&prior[i], &prior[j]);
                if a.depth().max(b.depth()) + 1 != d {
                    return None;
                }
                Some(Arc::new(op(a.clone(), b.clone())))
            })
        })
    };
    Box::new(
        quantified(false, true)
            .chain(quantified(false, false))
            .chain(quantified(true, true))
            .chain(quantified(true, false))
            .chain(negations)
            .chain(binary(Formula::And))
            .chain(binary(Formula::Or))
            .chain(binary(Formula::Implies)),
    )
}

fn atoms(terms: &[Term]) -> Vec<Formula> {
    let mut out = Vec::new();
    for a in terms {
        for b in terms {
            out.push(Formula::Member(a.clone(), b.clone()));
            out.push(Formula::Equal(a.clone(), b.clone()));
        }
    }
    out.extend(terms.iter().map(|t| Formula::PredA(t.clone())));
    out.push(Formula::True);
    out.push(Formula::False);
    out
}
