use std::collections::BTreeMap;

use num_traits::{One, Zero};
use parskit::ars;
use parskit::certify::{check_lyapunov, LyapunovCertificate, Valuation};
use parskit::par::Execution;
use parskit::prob::{self, absorption_solve, pn_trace};
use parskit::rational::ratio;
use parskit::{load_system, Pars, Prob, StateId};
use proptest::prelude::*;

/// Per state: `None` for a normal form, else a list of (target, weight).
type Shape = Vec<Option<Vec<(usize, i64)>>>;

fn shape() -> impl Strategy<Value = Shape> {
    (1usize..=9).prop_flat_map(|n| {
        let row = prop_oneof![
            1 => Just(None),
            3 => prop::collection::btree_map(0..n, 1i64..=4, 1..=3.min(n))
                .prop_map(|m| Some(m.into_iter().collect::<Vec<_>>())),
        ];
        prop::collection::vec(row, n)
    })
}

fn build(shape: &Shape) -> Pars {
    let names: Vec<String> = (0..shape.len()).map(|i| format!("s{i}")).collect();
    let mut rules = Vec::new();
    for (i, row) in shape.iter().enumerate() {
        if let Some(out) = row {
            let total: i64 = out.iter().map(|(_, w)| w).sum();
            for (t, w) in out {
                rules.push((names[i].clone(), names[*t].clone(), ratio(*w, total)));
            }
        }
    }
    Pars::probabilistic(names, rules).unwrap()
}

fn build_plain(shape: &Shape) -> Pars {
    build(shape).underlying_ars()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn json_round_trip(s in shape()) {
        let sys = build(&s);
        let back = load_system(&sys.to_json()).unwrap();
        prop_assert_eq!(&back, &sys);
        let plain = build_plain(&s);
        prop_assert_eq!(load_system(&plain.to_json()).unwrap(), plain);
    }

    #[test]
    fn reach_and_divergence_sum_to_one(s in shape()) {
        let sys = build(&s);
        let solved = absorption_solve(&sys).unwrap();
        for st in sys.states() {
            let r = &solved[st];
            prop_assert_eq!(r.reach_total() + r.divergence.exact().unwrap(), Prob::one());
        }
    }

    #[test]
    fn reach_satisfies_one_step_recursion(s in shape()) {
        let sys = build(&s);
        let solved = absorption_solve(&sys).unwrap();
        for i in (0..sys.len()).filter(|i| !sys.is_normal_form_idx(*i)) {
            let mut expect: BTreeMap<StateId, Prob> = BTreeMap::new();
            for (j, p) in sys.successors(i) {
                for (t, q) in &solved[sys.state(*j)].reach {
                    *expect.entry(t.clone()).or_insert_with(Prob::zero) += p.as_ref().unwrap() * q;
                }
            }
            prop_assert_eq!(&expect, &solved[sys.state(i)].reach);
        }
    }

    #[test]
    fn newman(s in shape()) {
        let sys = build_plain(&s);
        if ars::check_termination(&sys).is_yes() {
            prop_assert_eq!(
                ars::check_local_confluence(&sys).is_yes(),
                ars::check_confluence(&sys).is_yes()
            );
        }
    }

    #[test]
    fn unique_nf_matches_confluence_when_normalizing(s in shape()) {
        let sys = build_plain(&s);
        if ars::check_normalizing(&sys).is_yes() {
            prop_assert_eq!(ars::check_unique_nf(&sys).is_yes(), ars::check_confluence(&sys).is_yes());
        }
        if ars::check_unique_nf(&sys).is_yes() {
            prop_assert!(ars::check_normalizing(&sys).is_yes());
        }
    }

    #[test]
    fn execution_modes_agree(s in shape()) {
        let sys = build_plain(&s);
        prop_assert_eq!(
            ars::check_confluence_with(&sys, Execution::Parallel),
            ars::check_confluence_with(&sys, Execution::Sequential)
        );
        prop_assert_eq!(
            ars::check_local_confluence_with(&sys, Execution::Parallel),
            ars::check_local_confluence_with(&sys, Execution::Sequential)
        );
    }

    #[test]
    fn settled_mass_grows_toward_reach(s in shape(), n in 0usize..25) {
        let sys = build(&s);
        let start = sys.state(0).clone();
        let trace = pn_trace(&sys, &start, n).unwrap();
        let limit = &absorption_solve(&sys).unwrap()[&start].reach;
        for w in trace.windows(2) {
            for (t, p) in &w[0].settled {
                prop_assert!(w[1].settled.get(t).is_some_and(|q| q >= p));
            }
            prop_assert!(w[1].alive_total() <= w[0].alive_total());
        }
        for step in &trace {
            prop_assert_eq!(step.settled_total() + step.alive_total(), Prob::one());
            for (t, p) in &step.settled {
                prop_assert!(limit.get(t).is_some_and(|q| p <= q));
            }
        }
    }

    #[test]
    fn certificate_scaling(s in shape(), vals in prop::collection::vec(0i64..50, 9), k in 1i64..6) {
        let sys = build(&s);
        let table: BTreeMap<StateId, Prob> =
            sys.states().iter().zip(&vals).map(|(st, v)| (st.clone(), ratio(*v, 1))).collect();
        let base = LyapunovCertificate::new(Valuation::Table(table), ratio(1, 2));
        let scaled = LyapunovCertificate::new(base.valuation.scaled(ratio(k, 1)), ratio(k, 2));
        let a = check_lyapunov(&sys, &base).unwrap();
        let b = check_lyapunov(&sys, &scaled).unwrap();
        prop_assert_eq!(a.holds(), b.holds());
        for (st, m) in &a.margins {
            prop_assert_eq!(&b.margins[st], &(m * ratio(k, 1)));
        }
        // a valid certificate implies a.s. termination on a finite system
        if a.is_certified() {
            prop_assert!(prob::check_as_termination(&sys).unwrap().is_yes());
        }
    }
}
