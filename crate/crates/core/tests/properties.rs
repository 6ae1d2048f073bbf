mod common;

use omega_shaping::automata::{parse_hoa, serialize_hoa, LassoWord, Nba, Transition};
use omega_shaping::mdp::Mdp;
use omega_shaping::oracle::{buchi_value, mec_decomposition, policy_buchi_values};
use omega_shaping::product::{
    build_product, build_product_with, project_strategy, Restriction, Strategy as Policy,
};
use omega_shaping::shaping::{augment, Mode};
use omega_shaping::solvers::{evaluate_policy, solve_optimal, value_iteration};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn word(len: usize, max: usize) -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(0..common::ALPHABET.len(), len..=max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn hoa_serialization_round_trips(seed in any::<u64>()) {
        let a = common::random_nba(&mut rng(seed), 4);
        let text = serialize_hoa(&a);
        let back = parse_hoa(&text).unwrap();
        prop_assert_eq!(serialize_hoa(&back), text);
        prop_assert_eq!(back.transitions(), a.transitions());
        prop_assert_eq!(back.gfm_asserted(), a.gfm_asserted());
    }

    #[test]
    fn determinism_and_completeness_match_scans(seed in any::<u64>()) {
        let a = common::random_nba(&mut rng(seed), 4);
        let ts = a.transitions();
        let pairwise = ts.iter().all(|t| {
            ts.iter().all(|u| !(t.source == u.source && t.symbol == u.symbol && t.target != u.target))
        });
        prop_assert_eq!(a.is_deterministic(), pairwise);
        let exhaustive = (0..a.num_states()).all(|q| {
            (0..a.alphabet().len()).all(|sym| ts.iter().any(|t| t.source == q && t.symbol == sym))
        });
        prop_assert_eq!(a.is_complete(), exhaustive);
    }

    #[test]
    fn lasso_acceptance_matches_closure_oracle(
        seed in any::<u64>(),
        prefix in word(0, 3),
        cycle in word(1, 3),
    ) {
        let a = common::random_nba(&mut rng(seed), 3);
        let w = LassoWord::new(prefix, cycle).unwrap();
        prop_assert_eq!(a.accepts_lasso(&w).unwrap(), common::lasso_oracle(&a, &w));
    }

    #[test]
    fn lasso_acceptance_is_rotation_invariant(
        seed in any::<u64>(),
        prefix in word(0, 3),
        cycle in word(1, 4),
    ) {
        let a = common::random_nba(&mut rng(seed), 3);
        let w = LassoWord::new(prefix.clone(), cycle.clone()).unwrap();
        let mut longer = prefix;
        longer.push(cycle[0]);
        let mut rotated = cycle[1..].to_vec();
        rotated.push(cycle[0]);
        let v = LassoWord::new(longer, rotated).unwrap();
        prop_assert_eq!(a.accepts_lasso(&w).unwrap(), a.accepts_lasso(&v).unwrap());
    }

    #[test]
    fn deterministic_complete_search_follows_one_run(
        seed in any::<u64>(),
        prefix in word(0, 4),
        cycle in word(1, 4),
    ) {
        let a = common::random_dba(&mut rng(seed), 3);
        let w = LassoWord::new(prefix.clone(), cycle.clone()).unwrap();
        let outcome = a.lasso_search(&w).unwrap();
        prop_assert!(outcome.explored <= prefix.len() + a.num_states() * cycle.len());
    }

    #[test]
    fn product_transitions_follow_the_two_case_rule(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = common::random_mdp(&mut r, 5, 3);
        let a = common::random_nba(&mut r, 3).completed();
        let p = build_product(&m, &a).unwrap();
        for s in 0..p.num_states() {
            let (ms, q) = p.state(s);
            prop_assert!(p.num_choices(s) > 0);
            for c in p.choices(s) {
                let original = m.choice(ms, c.pair.action).unwrap();
                let mass: f64 = c.outcomes.iter().map(|o| o.prob).sum();
                prop_assert!((mass - 1.0).abs() <= 1e-12);
                prop_assert_eq!(c.outcomes.len(), original.outcomes.len());
                for (o, base) in c.outcomes.iter().zip(&original.outcomes) {
                    let (ms2, q2) = p.state(o.target);
                    prop_assert_eq!(ms2, base.target);
                    prop_assert_eq!(o.prob, base.prob);
                    prop_assert_eq!(Some(o.label), base.label);
                    // Γ× by direct scan of the automaton's transition list
                    let edge = a
                        .transitions()
                        .iter()
                        .find(|t| t.source == q && t.symbol == o.label && t.target == q2);
                    prop_assert!(edge.is_some());
                    prop_assert_eq!(o.accepting, edge.unwrap().accepting);
                }
            }
        }
    }

    #[test]
    fn deterministic_products_keep_the_action_sets(seed in any::<u64>()) {
        let inst = common::random_instance(&mut rng(seed));
        let p = &inst.product;
        for s in 0..p.num_states() {
            prop_assert_eq!(p.num_choices(s), inst.mdp.available(p.state(s).0).count());
        }
    }

    #[test]
    fn controllers_recompose_to_the_same_strategy(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = common::random_instance(&mut r);
        let p = &inst.product;
        let f = omega_shaping::cli::random_strategy(p, &mut r);
        let controller = project_strategy(p, &f);
        prop_assert_eq!(controller.recompose(p), Some(f));
        prop_assert_eq!(controller.initial_memory, inst.nba.initial());
    }

    #[test]
    fn reachable_restriction_preserves_values(seed in any::<u64>()) {
        let inst = common::random_instance(&mut rng(seed));
        let reachable = &inst.product;
        let full = build_product_with(&inst.mdp, &inst.nba, Restriction::Full).unwrap();
        let (s0, q0) = reachable.state(reachable.initial());
        prop_assert_eq!(full.state(full.initial()), (s0, q0));

        let (vr, _) = buchi_value(reachable);
        let (vf, _) = buchi_value(&full);
        prop_assert!((vr.at(reachable.initial()) - vf.at(full.initial())).abs() <= 1e-12);

        for (zeta, mode) in [(0.9, Mode::TotalReward), (0.9, Mode::ReachTarget)] {
            let mr = augment(reachable, zeta, mode).unwrap();
            let mf = augment(&full, zeta, mode).unwrap();
            let (_, fr) = solve_optimal(&mr, 1e-12, 1_000_000).unwrap();
            let (_, ff) = solve_optimal(&mf, 1e-12, 1_000_000).unwrap();
            let er = evaluate_policy(&mr, &fr, 1e-12).unwrap();
            let ef = evaluate_policy(&mf, &ff, 1e-12).unwrap();
            prop_assert!(
                (er.at(reachable.initial()) - ef.at(full.initial())).abs() <= 1e-12,
                "{} vs {}", er.at(reachable.initial()), ef.at(full.initial())
            );
        }
    }

    #[test]
    fn buchi_value_ignores_automaton_renaming_and_padding(seed in any::<u64>(), shift in 1usize..3) {
        let inst = common::random_instance(&mut rng(seed));
        let a = &inst.nba;
        let n = a.num_states();
        let extra = 2;
        // rotate state indices by `shift` and append unreachable states
        let rename = |q: usize| (q + shift) % n;
        let mut transitions: Vec<Transition> = a
            .transitions()
            .iter()
            .map(|t| Transition { source: rename(t.source), target: rename(t.target), ..*t })
            .collect();
        for q in n..n + extra {
            for symbol in 0..a.alphabet().len() {
                transitions.push(Transition { source: q, symbol, target: q, accepting: true });
            }
        }
        let b = Nba::new(a.alphabet().to_vec(), n + extra, rename(a.initial()), transitions, false).unwrap();
        prop_assert!(b.is_deterministic() && b.is_complete());
        let p = build_product(&inst.mdp, &b).unwrap();
        let (v1, _) = buchi_value(&inst.product);
        let (v2, _) = buchi_value(&p);
        prop_assert!((v1.at(inst.product.initial()) - v2.at(p.initial())).abs() <= 1e-12);
    }

    #[test]
    fn end_components_are_closed_connected_and_maximal(seed in any::<u64>()) {
        let inst = common::random_instance(&mut rng(seed));
        let p = &inst.product;
        prop_assume!(p.num_states() <= 6);
        let n = p.num_states();
        let mecs = mec_decomposition(p);
        let mut owner = vec![None; n];
        for (i, mec) in mecs.iter().enumerate() {
            let mut set = vec![false; n];
            for (&s, cs) in mec.states.iter().zip(&mec.action_pairs) {
                prop_assert!(owner[s].is_none(), "state in two components");
                owner[s] = Some(i);
                set[s] = true;
                prop_assert!(!cs.is_empty());
                for &c in cs {
                    prop_assert!(p.choices(s)[c].outcomes.iter().all(|o| o.prob == 0.0 || mec.contains(o.target)));
                }
            }
            prop_assert!(common::is_end_component(p, &set));
        }
        // every end component found by subset enumeration sits inside one MEC
        for mask in 1u32..(1 << n) {
            let set: Vec<bool> = (0..n).map(|s| mask & (1 << s) != 0).collect();
            if common::is_end_component(p, &set) {
                let members: Vec<usize> = (0..n).filter(|&s| set[s]).collect();
                let first = owner[members[0]];
                prop_assert!(first.is_some());
                prop_assert!(members.iter().all(|&s| owner[s] == first));
            }
        }
    }

    #[test]
    fn shaping_keeps_strategies_and_mass(seed in any::<u64>(), zeta in 0.01f64..0.99) {
        let inst = common::random_instance(&mut rng(seed));
        let p = &inst.product;
        for mode in [Mode::ReachTarget, Mode::TotalReward, Mode::BiasedDiscount] {
            let model = augment(p, zeta, mode).unwrap();
            for s in 0..p.num_states() {
                prop_assert_eq!(model.num_choices(s), p.num_choices(s));
                for c in 0..p.num_choices(s) {
                    let mass: f64 = model.outcomes(s, c).iter().map(|o| o.prob).sum();
                    prop_assert!((mass - 1.0).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn biased_payoff_matches_closed_form(seed in any::<u64>(), zeta in 0.05f64..0.95) {
        let mut r = rng(seed);
        let inst = common::random_instance(&mut r);
        let model = augment(&inst.product, zeta, Mode::BiasedDiscount).unwrap();
        let f = omega_shaping::cli::random_strategy(&inst.product, &mut r);
        let run = model.simulate(|s, _| f.choice(s), 200, &mut r);
        let n = run.accepting.iter().filter(|&&a| a).count() as i32;
        let payoff = model.run_payoff(&run).unwrap();
        prop_assert!((payoff - (1.0 - zeta.powi(n)) / (1.0 - zeta)).abs() <= 1e-12);
        let total = model.with_mode(Mode::TotalReward);
        let stopped = total.simulate(|s, _| f.choice(s), 200, &mut r);
        prop_assert_eq!(total.run_payoff(&stopped).unwrap(), stopped.accepting.iter().filter(|&&a| a).count() as f64);
    }

    #[test]
    fn simulation_respects_support(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m: Mdp = common::random_mdp(&mut r, 6, 3);
        for s in 0..m.num_states() {
            for a in m.available(s).collect::<Vec<_>>() {
                let (next, label) = m.sample_step(s, a, &mut r).unwrap();
                let choice = m.choice(s, a).unwrap();
                let o = choice.outcomes.iter().find(|o| o.target == next).unwrap();
                prop_assert!(o.prob > 0.0);
                prop_assert_eq!(o.label, Some(label));
            }
        }
    }

    #[test]
    fn value_iteration_is_monotone_and_bounded(seed in any::<u64>(), zeta in 0.1f64..0.95) {
        let inst = common::random_instance(&mut rng(seed));
        for mode in [Mode::ReachTarget, Mode::TotalReward] {
            let model = augment(&inst.product, zeta, mode).unwrap();
            let bound = model.payoff_bound();
            let mut prev: Option<Vec<f64>> = None;
            let mut ok = true;
            let v = value_iteration(&model, 1e-10, 1_000_000, |_, v| {
                if let Some(prev) = &prev {
                    ok &= v.iter().zip(prev).all(|(x, y)| x >= y);
                }
                ok &= v.iter().all(|&x| (0.0..=bound + 1e-9).contains(&x));
                prev = Some(v.to_vec());
            }).unwrap();
            prop_assert!(ok);
            prop_assert!(v.residual <= 1e-10);
            if let Some(t) = model.target() {
                prop_assert_eq!(v.values[t], 0.0);
            }
        }
    }

    #[test]
    fn policy_buchi_values_match_iteration_oracle(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = common::random_instance(&mut r);
        let f = omega_shaping::cli::random_strategy(&inst.product, &mut r);
        let exact = policy_buchi_values(&inst.product, &f);
        let oracle = common::buchi_probabilities(&inst.product, &f);
        for (x, y) in exact.iter().zip(&oracle) {
            prop_assert!((x - y).abs() <= 1e-9, "{} vs {}", x, y);
        }
    }
}

#[test]
fn corpus_automata_are_in_canonical_form() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus");
    let mut checked = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "hoa") {
            let text = std::fs::read_to_string(&path).unwrap();
            let a = parse_hoa(&text).unwrap();
            assert_eq!(serialize_hoa(&a), text, "{}", path.display());
            checked += 1;
        }
    }
    assert!(checked >= 4);
}

#[test]
fn nondeterministic_lasso_matches_run_enumeration() {
    let text = include_str!("../corpus/fg_g_nondet.hoa");
    let a = parse_hoa(text).unwrap();
    assert!(!a.is_deterministic());
    // all words with prefix and cycle of length at most 3
    let mut words = Vec::new();
    for plen in 0..=3u32 {
        for clen in 1..=3u32 {
            for bits in 0..(1u32 << (plen + clen)) {
                let letters: Vec<usize> = (0..plen + clen)
                    .map(|i| ((bits >> i) & 1) as usize)
                    .collect();
                let (prefix, cycle) = letters.split_at(plen as usize);
                words.push(LassoWord::new(prefix.to_vec(), cycle.to_vec()).unwrap());
            }
        }
    }
    for w in &words {
        assert_eq!(
            a.accepts_lasso(w).unwrap(),
            common::lasso_oracle(&a, w),
            "{w:?}"
        );
    }
    let g = a.symbol_index("g").unwrap();
    let n = 1 - g;
    assert!(a
        .accepts_lasso(&LassoWord::new(vec![n, n], vec![g]).unwrap())
        .unwrap());
    assert!(!a
        .accepts_lasso(&LassoWord::new(vec![], vec![g, n]).unwrap())
        .unwrap());
}

#[test]
fn strategy_enumeration_covers_every_combination() {
    let mut r = rng(11);
    let inst = loop {
        let inst = common::random_instance(&mut r);
        if inst.product.num_states() <= 4 {
            break inst;
        }
    };
    let p = &inst.product;
    let expected: usize = (0..p.num_states()).map(|s| p.num_choices(s)).product();
    let all = common::all_strategies(p);
    assert_eq!(all.len(), expected);
    let distinct: std::collections::HashSet<&Policy> = all.iter().collect();
    assert_eq!(distinct.len(), expected);
}
