//! Randomized invariants across the kernel, collapse, logic and eval layers.

use hfset::collapse::{encode_as_graph, mostowski_collapse};
use hfset::eval::{eval, Environment, Universe};
use hfset::logic::{enumerate_formulas, Formula};
use hfset::{HfSet, SetStore};
use num_bigint::BigUint;
use proptest::prelude::*;

fn small_set(st: &mut SetStore, code: u64) -> HfSet {
    st.decode_u64(code)
}

thread_local! {
    static STAGE_STORE: std::cell::RefCell<SetStore> = std::cell::RefCell::new(SetStore::new());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn codes_round_trip(code in any::<u64>()) {
        let mut st = SetStore::new();
        let s = st.decode_u64(code);
        prop_assert_eq!(st.ackermann_code(s).unwrap(), &BigUint::from(code));
    }

    #[test]
    fn code_order_is_canonical_order(a in 0u64..1 << 20, b in 0u64..1 << 20) {
        let mut st = SetStore::new();
        let (x, y) = (st.decode_u64(a), st.decode_u64(b));
        prop_assert_eq!(st.cmp(x, y), a.cmp(&b));
    }

    #[test]
    fn stage_membership_is_rank(code in 0u64..65536) {
        STAGE_STORE.with(|cell| {
            let st = &mut *cell.borrow_mut();
            let s = small_set(st, code);
            let rank = st.rank(s);
            for n in 0..=5 {
                let v = st.v_stage(n).unwrap();
                prop_assert_eq!(st.contains(v, s), rank < n);
            }
            Ok(())
        })?;
    }

    #[test]
    fn powerset_size(code in 0u64..1 << 10) {
        let mut st = SetStore::new();
        let s = small_set(&mut st, code);
        let p = st.powerset(s).unwrap();
        prop_assert_eq!(st.card(p), 1usize << st.card(s));
        for sub in st.members(p).to_vec() {
            prop_assert!(st.is_subset(sub, s));
        }
    }

    #[test]
    fn pairs_are_injective(a in 0u64..4096, b in 0u64..4096) {
        let mut st = SetStore::new();
        let (x, y) = (st.decode_u64(a), st.decode_u64(b));
        let p = st.kuratowski_pair(x, y);
        prop_assert_eq!(st.unpair(p), Some((x, y)));
    }

    #[test]
    fn transitive_closure_is_least(code in 0u64..1 << 16) {
        let mut st = SetStore::new();
        let s = small_set(&mut st, code);
        let t = st.transitive_closure(s);
        prop_assert!(st.is_transitive(t));
        prop_assert!(st.is_subset(s, t));
        // Every member of the closure is reachable: removing any breaks transitivity or containment.
        for x in st.members(t).to_vec() {
            let rest: Vec<HfSet> = st.members(t).iter().copied().filter(|y| *y != x).collect();
            let smaller = st.make_set(rest);
            prop_assert!(!(st.is_transitive(smaller) && st.is_subset(s, smaller)));
        }
    }

    #[test]
    fn collapse_inverts_encoding(code in 0u64..1 << 16, seed in any::<u64>()) {
        let mut st = SetStore::new();
        let s0 = small_set(&mut st, code);
        let s = st.transitive_closure(s0);
        let enc = encode_as_graph(&st, s, seed).unwrap();
        let res = mostowski_collapse(&mut st, &enc.graph).unwrap();
        prop_assert_eq!(res.image, s);
        prop_assert_eq!(res.pi, enc.labels);
    }

    #[test]
    fn literals_round_trip(code in any::<u64>()) {
        let mut st = SetStore::new();
        let s = st.decode_u64(code);
        let text = st.to_literal(s);
        prop_assert_eq!(st.parse_set(&text).unwrap(), s);
    }
}

#[test]
fn negation_and_quantifier_duality() {
    let mut st = SetStore::new();
    let a = st.parse_set("{{},{{{}}}}").unwrap();
    let u = Universe::stage(&mut st, 3, a).unwrap();
    let v = st.parse_set("{{},{{}}}").unwrap();
    let env = Environment::new().with_var("y", v);
    let y = hfset::logic::Term::var("y");
    for f in enumerate_formulas(2, &["x", "y"], &[]).unwrap() {
        let free = f.free_vars();
        if free.vars.iter().any(|n| &**n != "y" && &**n != "x") {
            continue;
        }
        let closed = Formula::forall_in("x", y.clone(), (*f).clone());
        let dual = Formula::not(Formula::exists_in("x", y.clone(), Formula::not((*f).clone())));
        assert_eq!(eval(&st, &closed, &env, &u).unwrap(), eval(&st, &dual, &env, &u).unwrap());
        let unbounded = Formula::forall("x", (*f).clone());
        let unbounded_dual = Formula::not(Formula::exists("x", Formula::not((*f).clone())));
        assert_eq!(
            eval(&st, &unbounded, &env, &u).unwrap(),
            eval(&st, &unbounded_dual, &env, &u).unwrap()
        );
        let g = Formula::implies((*f).clone(), Formula::False);
        assert_eq!(
            eval(&st, &Formula::forall("x", g), &env, &u).unwrap(),
            eval(&st, &Formula::forall("x", Formula::not((*f).clone())), &env, &u).unwrap()
        );
    }
}

#[test]
fn independent_stores_agree_across_threads() {
    let codes: Vec<String> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..4)
            .map(|_| {
                s.spawn(|| {
                    let mut st = SetStore::new();
                    let v = st.v_stage(4).unwrap();
                    let p = st.kuratowski_pair(v, v);
                    format!("{} {}", st.ackermann_code(v).unwrap(), st.to_literal(p))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert!(codes.windows(2).all(|w| w[0] == w[1]));
}
