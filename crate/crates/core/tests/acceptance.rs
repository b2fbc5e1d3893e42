//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without the libtest harness so the lines print as-is.

use std::collections::{BTreeSet, HashMap};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use hfset::absoluteness::{find_nonabsolute, fuzz_absoluteness, reference_truth, FuzzConfig};
use hfset::collapse::{encode_as_graph, mostowski_collapse, CollapseError, Digraph};
use hfset::definability::{automorphisms, definable_subsets, l_stage, DEFAULT_DEPTH_BUDGET};
use hfset::eval::{eval, Environment, Universe};
use hfset::logic::{self, Formula, Name, Term};
use hfset::metatheory::{
    all_structures, check_complete_upto, encode_structure, encoding_carrier, fo_holds, sat_to_bounded,
    Completeness, FOFormula, Signature, Theory, STRUCTURE_PARAM,
};
use hfset::{HfSet, SetStore};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_secs: u64, what: &str) -> Result<(), String> {
    check(elapsed <= Duration::from_secs(limit_secs), || {
        format!("{what} took {:.1}s, limit {limit_secs}s", elapsed.as_secs_f64())
    })
}

fn stage_sizes() -> Outcome {
    let mut st = SetStore::new();
    let mut sizes = Vec::new();
    let start = Instant::now();
    for n in 0..=5 {
        let v = st.v_stage(n).map_err(|e| e.to_string())?;
        sizes.push(st.card(v));
    }
    let elapsed = start.elapsed();
    check(sizes == [0, 1, 2, 4, 16, 65536], || format!("sizes {sizes:?}"))?;
    within(elapsed, 10, "V_5")?;
    Ok(format!("|V_0..V_5| = {sizes:?}, built in {:.2}s", elapsed.as_secs_f64()))
}

fn absoluteness_suite() -> Outcome {
    let mut st = SetStore::new();
    let config = FuzzConfig {
        seed: 0,
        trials: 10_000,
        max_depth: 4,
        max_stage: 4,
        verbose: false,
    };
    let start = Instant::now();
    let report = fuzz_absoluteness(&mut st, &config).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(report.disagreements.is_empty(), || {
        format!("{} disagreements; first: {}", report.disagreements.len(), report.disagreements[0].render(&st))
    })?;
    check(report.trials == 10_000 && report.agreements == 10_000, || report.summary())?;
    within(elapsed, 60, "fuzz")?;
    Ok(format!("{} in {:.2}s", report.summary(), elapsed.as_secs_f64()))
}

fn nonabsoluteness_witness() -> Outcome {
    let mut st = SetStore::new();
    let e = st.empty();
    let v1 = Universe::stage(&mut st, 1, e).map_err(|e| e.to_string())?;
    let v2 = Universe::stage(&mut st, 2, e).map_err(|e| e.to_string())?;
    let w = find_nonabsolute(&st, &v1, &v2, 3)
        .map_err(|e| e.to_string())?
        .ok_or("no witness up to depth 3")?;
    let text = w.formula.display(&st).to_string();
    check(!w.formula.is_bounded(), || format!("{text} is bounded"))?;
    check(w.verdict.inner != w.verdict.outer, || "verdicts agree".into())?;
    let again = (
        reference_truth(&st, &w.formula, &HashMap::new(), &v1),
        reference_truth(&st, &w.formula, &HashMap::new(), &v2),
    );
    check(again == (w.verdict.inner, w.verdict.outer), || "re-evaluation differs".into())?;
    check(text == "exists x . exists y . x in y", || format!("witness changed: {text}"))?;
    Ok(format!("{text}: V_1 {}, V_2 {}", w.verdict.inner, w.verdict.outer))
}

fn round_trip(st: &mut SetStore, s: HfSet, seed: u64) -> Result<(), String> {
    let enc = encode_as_graph(st, s, seed).map_err(|e| e.to_string())?;
    let res = mostowski_collapse(st, &enc.graph).map_err(|e| e.to_string())?;
    check(res.image == s, || format!("image differs for seed {seed}"))?;
    check(res.pi == enc.labels, || format!("pi does not invert the labelling for seed {seed}"))
}

fn mostowski_round_trip() -> Outcome {
    let mut st = SetStore::new();
    let start = Instant::now();
    let mut runs = 0;
    for n in 0..=4 {
        let v = st.v_stage(n).map_err(|e| e.to_string())?;
        for seed in 0..100 {
            round_trip(&mut st, v, seed)?;
            runs += 1;
        }
    }
    let small = start.elapsed();
    within(small, 30, "V_0..V_4 round trips")?;
    let start = Instant::now();
    let v5 = st.v_stage(5).map_err(|e| e.to_string())?;
    round_trip(&mut st, v5, 0)?;
    let big = start.elapsed();
    within(big, 300, "V_5 round trip")?;
    Ok(format!(
        "{runs} round trips in {:.2}s; V_5 in {:.2}s",
        small.as_secs_f64(),
        big.as_secs_f64()
    ))
}

fn collapse_witnesses() -> Outcome {
    let mut st = SetStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut cycles, mut twins, mut tried) = (0, 0, 0);
    while cycles + twins < 1000 {
        tried += 1;
        let n = rng.gen_range(1..=8);
        let p = rng.gen_range(0.05..0.5);
        let mut g = Digraph::new(n);
        for u in 0..n {
            for v in 0..n {
                if rng.gen_bool(p) {
                    g.add_edge(u, v).map_err(|e| e.to_string())?;
                }
            }
        }
        match mostowski_collapse(&mut st, &g) {
            Err(CollapseError::NotWellFounded(w)) => {
                check(w.verify(&g), || format!("bad cycle witness on\n{g}"))?;
                cycles += 1;
            }
            Err(CollapseError::NotExtensional(w)) => {
                check(w.verify(&g), || format!("bad extensionality witness on\n{g}"))?;
                twins += 1;
            }
            Err(e) => return Err(e.to_string()),
            Ok(_) => {}
        }
    }
    let v4 = st.v_stage(4).map_err(|e| e.to_string())?;
    let pool = st.members(v4).to_vec();
    for i in 0..1000u64 {
        let seeds: Vec<HfSet> = pool.iter().copied().filter(|_| rng.gen_bool(0.2)).collect();
        let seed_set = st.make_set(seeds);
        let s = st.transitive_closure(seed_set);
        round_trip(&mut st, s, i).map_err(|e| format!("false rejection: {e}"))?;
    }
    Ok(format!(
        "{cycles} cyclic + {twins} non-extensional rejections verified ({tried} graphs drawn); 1000 encodings accepted"
    ))
}

fn finite_constructibility() -> Outcome {
    let mut st = SetStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let v4 = st.v_stage(4).map_err(|e| e.to_string())?;
    let pool = st.members(v4).to_vec();
    let start = Instant::now();
    for _ in 0..10 {
        let a_elems: Vec<HfSet> = pool.iter().copied().filter(|_| rng.gen_bool(0.4)).collect();
        let a = st.make_set(a_elems);
        for n in 0..=4 {
            let l = l_stage(&mut st, n, a).map_err(|e| e.to_string())?;
            let v = st.v_stage(n).map_err(|e| e.to_string())?;
            check(l.set == v, || format!("L_{n}[{}] differs from V_{n}", st.display(a)))?;
            if n <= 3 {
                check(l.exhausted.iter().all(|x| *x), || format!("L_{n} not exhausted"))?;
            }
        }
    }
    Ok(format!("L_n[A] = V_n for n <= 4 and 10 predicates in {:.2}s", start.elapsed().as_secs_f64()))
}

fn invariant_masks(st: &SetStore, m: HfSet, a: HfSet) -> Result<BTreeSet<u32>, String> {
    let n = st.card(m);
    let autos = automorphisms(st, m, a).map_err(|e| e.to_string())?;
    Ok((0u32..(1 << n))
        .filter(|mask| {
            autos.iter().all(|perm| {
                (0..n).filter(|i| mask >> i & 1 == 1).fold(0u32, |acc, i| acc | 1 << perm[i]) == *mask
            })
        })
        .collect())
}

fn rigidity() -> Outcome {
    let mut st = SetStore::new();
    let v4 = st.v_stage(4).map_err(|e| e.to_string())?;
    let pool = st.members(v4).to_vec();
    let e = st.empty();
    let mut transitive = 0;
    for mask in 0u32..(1 << 16) {
        if mask.count_ones() > 8 {
            continue;
        }
        let elems: Vec<HfSet> = (0..16).filter(|i| mask >> i & 1 == 1).map(|i| pool[i]).collect();
        let m = st.make_set(elems);
        if !st.is_transitive(m) {
            continue;
        }
        transitive += 1;
        let autos = automorphisms(&st, m, e).map_err(|e| e.to_string())?;
        let identity: Vec<usize> = (0..st.card(m)).collect();
        check(autos == vec![identity], || format!("{} has {} automorphisms", st.display(m), autos.len()))?;
    }
    let v5 = st.v_stage(5).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..50 {
        let source = if trial % 2 == 0 { v4 } else { v5 };
        let mut elems = st.members(source).to_vec();
        elems.shuffle(&mut rng);
        elems.truncate(rng.gen_range(0..=6));
        let a_elems: Vec<HfSet> = elems.iter().copied().filter(|_| rng.gen_bool(0.3)).collect();
        let m = st.make_set(elems);
        let a = st.make_set(a_elems);
        let report = definable_subsets(&mut st, m, a, false, DEFAULT_DEPTH_BUDGET).map_err(|e| e.to_string())?;
        let got: BTreeSet<u32> = report
            .subsets()
            .map(|s| {
                st.members(m)
                    .iter()
                    .enumerate()
                    .filter(|(_, x)| st.contains(s, **x))
                    .fold(0, |acc, (i, _)| acc | 1 << i)
            })
            .collect();
        let want = invariant_masks(&st, m, a)?;
        check(got == want, || format!("family mismatch on m = {}, a = {}", st.display(m), st.display(a)))?;
    }
    Ok(format!("{transitive} transitive subsets of V_4 rigid; 50 definable families match"))
}

/// All first-order formulas up to `depth`, level by level.
fn fo_formulas(depth: usize, vars: &[&str], sig: &Signature) -> Vec<FOFormula> {
    let v: Vec<Name> = vars.iter().map(|x| Name::from(*x)).collect();
    let mut levels: Vec<Vec<FOFormula>> = Vec::new();
    let mut atoms = Vec::new();
    for a in &v {
        for b in &v {
            atoms.push(FOFormula::Eq(a.clone(), b.clone()));
        }
    }
    for (name, arity) in sig.iter() {
        let mut tuples: Vec<Vec<Name>> = vec![vec![]];
        for _ in 0..arity {
            tuples = tuples
                .into_iter()
                .flat_map(|t| v.iter().map(move |x| [t.clone(), vec![x.clone()]].concat()))
                .collect();
        }
        atoms.extend(tuples.into_iter().map(|t| FOFormula::Rel(name.clone(), t)));
    }
    atoms.extend([FOFormula::True, FOFormula::False]);
    levels.push(atoms);
    for _ in 2..=depth {
        let prev = levels.last().expect("nonempty").clone();
        let lower: Vec<FOFormula> = levels[..levels.len() - 1].concat();
        let mut next = Vec::new();
        next.extend(prev.iter().map(|f| FOFormula::not(f.clone())));
        for build in [FOFormula::and, FOFormula::or, FOFormula::implies] {
            for a in &prev {
                for b in lower.iter().chain(&prev) {
                    next.push(build(a.clone(), b.clone()));
                }
                for b in &lower {
                    next.push(build(b.clone(), a.clone()));
                }
            }
        }
        for x in vars {
            for f in &prev {
                next.push(FOFormula::forall(x, f.clone()));
                next.push(FOFormula::exists(x, f.clone()));
            }
        }
        levels.push(next);
    }
    levels.concat()
}

fn translation_grid() -> Outcome {
    let mut st = SetStore::new();
    let sig = Signature::new(&[("R", 2)]).map_err(|e| e.to_string())?;
    let sentences: Vec<FOFormula> = fo_formulas(3, &["x", "y"], &sig)
        .into_iter()
        .filter(|f| f.is_sentence())
        .collect();
    let start = Instant::now();
    let mut translated = Vec::new();
    for phi in &sentences {
        let sigma = sat_to_bounded(&mut st, phi, &sig).map_err(|e| e.to_string())?;
        check(sigma.is_bounded(), || format!("translation of {phi} is unbounded"))?;
        translated.push(sigma);
    }
    let e = st.empty();
    let mut structures = 0;
    let mut checks = 0;
    for n in 1..=3 {
        for m in all_structures(&sig, n).map_err(|e| e.to_string())? {
            structures += 1;
            let enc = encode_structure(&mut st, &m).map_err(|e| e.to_string())?;
            let carrier = encoding_carrier(&mut st, enc);
            let u = Universe::new(&st, carrier, e).map_err(|e| e.to_string())?;
            let env = Environment::new().with_param(STRUCTURE_PARAM, enc);
            for (phi, sigma) in sentences.iter().zip(&translated) {
                let direct = fo_holds(&m, phi).map_err(|e| e.to_string())?;
                let via = eval(&st, sigma, &env, &u).map_err(|e| e.to_string())?;
                check(direct == via, || format!("{phi} on {m}: direct {direct}, translated {via}"))?;
                checks += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    within(elapsed, 300, "translation grid")?;
    Ok(format!(
        "{} sentences of depth <= 3 x {structures} structures = {checks} agreements in {:.2}s",
        sentences.len(),
        elapsed.as_secs_f64()
    ))
}

fn completeness() -> Outcome {
    let parse = |text: &str| Theory::parse(text).map_err(|e| e.to_string());
    let one = parse("sig\nexists x . forall y . y = x\n")?;
    let verdict = check_complete_upto(&one, 4, 4).map_err(|e| e.to_string())?;
    check(matches!(verdict, Completeness::Complete { .. }), || format!("one-element theory: {verdict}"))?;
    let empty = parse("sig\n")?;
    let sentence = match check_complete_upto(&empty, 4, 4).map_err(|e| e.to_string())? {
        Completeness::Counterexample { sentence, true_in, false_in } => {
            let t = fo_holds(&true_in, &sentence).map_err(|e| e.to_string())?;
            let f = fo_holds(&false_in, &sentence).map_err(|e| e.to_string())?;
            check(t && !f, || format!("counterexample {sentence} does not separate its models"))?;
            format!("{sentence} separates sizes {} and {}", true_in.size(), false_in.size())
        }
        other => return Err(format!("empty theory: {other}")),
    };
    let bottom = parse("sig\nfalse\n")?;
    let verdict = check_complete_upto(&bottom, 4, 4).map_err(|e| e.to_string())?;
    check(matches!(verdict, Completeness::Inconsistent { .. }), || format!("{{false}}: {verdict}"))?;
    Ok(format!("complete / incomplete ({sentence}) / inconsistent"))
}

struct AstGen<'a> {
    rng: &'a mut ChaCha8Rng,
    consts: Vec<HfSet>,
    fresh: usize,
}

impl AstGen<'_> {
    fn term(&mut self, scope: &[String]) -> Term {
        match self.rng.gen_range(0..6) {
            0 => Term::Const(*self.consts.choose(self.rng).expect("nonempty")),
            1 => Term::param(["a", "b"][self.rng.gen_range(0..2)]),
            2 | 3 if !scope.is_empty() => Term::var(scope.choose(self.rng).expect("nonempty")),
            _ => Term::var(["u", "w"][self.rng.gen_range(0..2)]),
        }
    }

    fn formula(&mut self, depth: usize, scope: &mut Vec<String>) -> Formula {
        if depth == 0 || self.rng.gen_bool(0.2) {
            return match self.rng.gen_range(0..5) {
                0 => Formula::Member(self.term(scope), self.term(scope)),
                1 => Formula::Equal(self.term(scope), self.term(scope)),
                2 => Formula::PredA(self.term(scope)),
                3 => Formula::True,
                _ => Formula::False,
            };
        }
        match self.rng.gen_range(0..8) {
            0 => Formula::not(self.formula(depth - 1, scope)),
            1 => Formula::and(self.formula(depth - 1, scope), self.formula(depth - 1, scope)),
            2 => Formula::or(self.formula(depth - 1, scope), self.formula(depth - 1, scope)),
            3 => Formula::implies(self.formula(depth - 1, scope), self.formula(depth - 1, scope)),
            k => {
                self.fresh += 1;
                let v = format!("v{}", self.fresh);
                let bound = self.term(scope);
                scope.push(v.clone());
                let body = self.formula(depth - 1, scope);
                scope.pop();
                match k {
                    4 => Formula::forall(&v, body),
                    5 => Formula::exists(&v, body),
                    6 => Formula::forall_in(&v, bound, body),
                    _ => Formula::exists_in(&v, bound, body),
                }
            }
        }
    }
}

fn parser_round_trip() -> Outcome {
    let mut st = SetStore::new();
    let consts = ["{}", "{{}}", "{{},{{}}}", "{{{{}}}}"]
        .iter()
        .map(|t| st.parse_set(t).expect("literal"))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut gen = AstGen {
        rng: &mut rng,
        consts,
        fresh: 0,
    };
    for i in 0..10_000 {
        let f = gen.formula(6, &mut Vec::new());
        let text = f.display(&st).to_string();
        let back = logic::parse(&mut st, &text).map_err(|e| format!("AST {i}: `{text}`: {e}"))?;
        check(back == f, || format!("AST {i} changed: `{text}`"))?;
    }
    let cases: [(&str, usize, usize); 12] = [
        ("forall x in", 1, 12),
        ("x in", 1, 5),
        ("(x = y", 1, 7),
        ("x = y)", 1, 6),
        ("A x", 1, 3),
        ("exists . true", 1, 8),
        ("x in y &\n  & z = z", 2, 3),
        ("x = y y", 1, 7),
        ("x # y", 1, 3),
        ("$ = x", 1, 2),
        ("x in y & forall z . true", 1, 10),
        ("", 1, 1),
    ];
    for (text, line, column) in cases {
        match logic::parse(&mut st, text) {
            Ok(_) => return Err(format!("`{}` parsed", text.escape_debug())),
            Err(e) => check((e.line, e.column) == (line, column), || {
                format!("`{}`: reported {}:{}, expected {line}:{column}", text.escape_debug(), e.line, e.column)
            })?,
        }
    }
    Ok(format!("10000 random ASTs round-trip; {} error positions exact", cases.len()))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("stage sizes", stage_sizes),
        ("bounded absoluteness", absoluteness_suite),
        ("non-absoluteness witness", nonabsoluteness_witness),
        ("Mostowski round trip", mostowski_round_trip),
        ("collapse precondition witnesses", collapse_witnesses),
        ("finite constructibility", finite_constructibility),
        ("rigidity and definability", rigidity),
        ("satisfaction translation", translation_grid),
        ("completeness checker", completeness),
        ("parser round trip", parser_round_trip),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|f| *f == id || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {name} ({secs:.2}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {id:>2} {name} ({secs:.2}s): {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
