use piforge::codec::SplitPolicy;
use piforge::engine::{improvement_set, is_improvement, peculiar_target, run, split_zeros, step, ActionSelector, PeculiarTarget, StateSelector, StepOutcome, Variant};
use piforge::families::{build_f, build_g, build_h, gamma_threshold, FamilyDescriptor};
use piforge::mdp::{compare, Dominance, Policy};
use piforge::rational::{int, ratio, Rational};
use piforge::verify::{self, Budgets};

fn sp(text: &str, k: usize) -> Policy {
    SplitPolicy::parse(text, k).unwrap().join()
}

fn one_step(mdp: &piforge::Mdp, p: &Policy, variant: &Variant) -> Policy {
    let mut rng = piforge::engine::rng_from_seed(0);
    match step(mdp, p, variant, &mut rng).unwrap() {
        StepOutcome::Improved { policy, .. } => policy,
        StepOutcome::Converged => panic!("converged at {p}"),
    }
}

#[test]
fn every_family_validates_and_is_acyclic() {
    for kind in ["F", "G", "H"] {
        for size in 1..=4 {
            for k in 2..=4 {
                let d: FamilyDescriptor = format!("{kind}:{size},{k}").parse().unwrap();
                let (mdp, layout) = d.build().unwrap();
                assert!(mdp.validate().is_valid(), "{d}");
                assert!(mdp.is_total_reward());
                assert_eq!(layout.state_names.len(), mdp.n_states());
                let (horizon, _) = mdp.horizon_and_reward_bound().unwrap();
                match kind {
                    "F" | "G" => assert_eq!(horizon, size, "{d}"),
                    _ => assert!(horizon >= size, "{d}"),
                }
            }
        }
    }
}

#[test]
fn generated_shapes() {
    let (f, _) = build_f(3, 3).unwrap();
    assert_eq!((f.n_nonterminal(), f.n_terminal()), (6, 1));
    let (g, _) = build_g(3, 3).unwrap();
    assert_eq!((g.n_nonterminal(), g.n_terminal()), (3, 4));
    assert!("F:0,1".parse::<FamilyDescriptor>().unwrap().build().is_err());
}

#[test]
fn value_examples() {
    let (f, _) = build_f(3, 3).unwrap();
    let v = f.evaluate(&sp("012·012", 3)).unwrap();
    assert_eq!(v.values, [0, 3, 5, 0, 3, 5].map(int));

    let (g, _) = build_g(2, 3).unwrap();
    let v = g.evaluate(&Policy::new(vec![0, 1])).unwrap();
    assert_eq!(v.values, vec![int(-2), ratio(-10, 3)]);

    let (g, _) = build_g(3, 3).unwrap();
    let p = Policy::zeros(3);
    let q = g.q_values(&p, &g.evaluate(&p).unwrap()).unwrap();
    assert_eq!(q.get(2, 2), &int(0));
    assert_eq!(q.get(2, 0), &int(-8));

    let p = sp("000·000", 3);
    let q = f.q_values(&p, &f.evaluate(&p).unwrap()).unwrap();
    assert_eq!(q.get(5, 1), &int(1));
    assert_eq!(q.get(5, 0), &int(0));
}

#[test]
fn improvement_examples() {
    let (f, _) = build_f(3, 3).unwrap();
    let zero = sp("000·000", 3);
    // Every j ≥ 1 earns a positive reward while all values are 0, so every
    // state is improvable with {1, 2}.
    let set = improvement_set(&f, &zero).unwrap();
    assert_eq!(set.states(), (0..6).collect::<Vec<_>>());
    assert!(set.iter().all(|(_, a)| a == [1, 2]));
    assert!(is_improvement(&f, &zero, &sp("000·001", 3)).unwrap());
    assert!(is_improvement(&f, &zero, &sp("100·000", 3)).unwrap());
    assert!(!is_improvement(&f, &zero, &zero).unwrap());

    let a = f.evaluate(&sp("001·001", 3)).unwrap();
    let b = f.evaluate(&zero).unwrap();
    assert_eq!(compare(&a, &b).unwrap(), Dominance::StrictlyDominates);
}

#[test]
fn peculiar_rule_examples() {
    let t = |s: &str| peculiar_target(&SplitPolicy::parse(s, 3).unwrap());
    assert_eq!(t("002·012"), PeculiarTarget::Partner(3));
    assert_eq!(t("000·000"), PeculiarTarget::Partner(3));
    assert_eq!(t("002·010"), PeculiarTarget::Counter(3));
    assert!(matches!(t("001·000"), PeculiarTarget::OffTrajectory(_)));
}

#[test]
fn step_examples() {
    let (g, _) = build_g(3, 3).unwrap();
    let howard = Variant::new(StateSelector::Howard, ActionSelector::IndexMin);
    assert_eq!(one_step(&g, &Policy::zeros(3), &howard), Policy::new(vec![0, 0, 1]));
    let mut rng = piforge::engine::rng_from_seed(0);
    assert_eq!(step(&g, &Policy::new(vec![2, 2, 2]), &howard, &mut rng).unwrap(), StepOutcome::Converged);

    let (f, layout) = build_f(3, 3).unwrap();
    let peculiar = verify::designated_variant(&layout);
    assert_eq!(one_step(&f, &sp("001·001", 3), &peculiar), sp("001·002", 3));
}

#[test]
fn peculiar_small_runs() {
    let (f, layout) = build_f(1, 2).unwrap();
    let traj = run(&f, &split_zeros(1, 2), &verify::designated_variant(&layout), 0, 10).unwrap();
    assert_eq!(traj.rendered(layout.split_at()), ["0·0", "0·1", "1·1"]);
    for (m, k) in [(2, 3), (3, 3), (2, 2)] {
        let (_, _, traj) = verify::peculiar_run(m, k).unwrap();
        assert_eq!(traj.len() as u128, verify::f_count(m, k).unwrap());
        assert!(traj.steps.iter().all(|s| s.switched.len() <= 1));
    }
}

#[test]
fn oracle_optima() {
    let (f, _) = build_f(2, 3).unwrap();
    assert_eq!(f.brute_force_optimal(1 << 20).unwrap().0, sp("22·22", 3));
    let (g, _) = build_g(3, 3).unwrap();
    assert_eq!(g.brute_force_optimal(1 << 20).unwrap().0, Policy::new(vec![2, 2, 2]));
    let (h, layout) = build_h(3, 2).unwrap();
    let traj = run(&h, &layout.zeros(), &Variant::new(verify::simple_for(&layout), ActionSelector::IndexMin), 0, 100).unwrap();
    let (_, best) = h.brute_force_optimal(1 << 20).unwrap();
    assert_eq!(h.evaluate(traj.last_policy()).unwrap(), best);
}

#[test]
fn balanced_values_and_dominance() {
    for m in 1..=3 {
        for k in 2..=3 {
            assert!(verify::check_balanced_values(m, k, 1 << 20).unwrap().passed);
            assert!(verify::check_prop1(m, k, 1 << 20).unwrap().passed);
        }
    }
    assert_eq!(verify::check_prop1(2, 2, 100).unwrap().expected, "6 ordered pairs strictly dominate");
}

#[test]
fn lemma1_chains() {
    for (m, k) in [(1, 2), (1, 4), (2, 2), (2, 3), (3, 3)] {
        let r = verify::check_lemma1_segments(m, k, 1 << 20).unwrap();
        assert!(r.passed, "{r}");
    }
}

#[test]
fn lemma2_small_cases() {
    assert_eq!(verify::check_lemma2(3, 3).unwrap().observed, "6 policy checks");
    assert_eq!(verify::check_lemma2(5, 6).unwrap().observed, "25 policy checks");
    let r = verify::check_lemma2(1, 2).unwrap();
    assert!(r.passed, "{r}");
}

#[test]
fn g_index_small_cases() {
    for k in 2..=6 {
        let r = verify::check_g_index(1, k).unwrap();
        assert!(r.passed);
        assert_eq!(r.observed, format!("{k} policies"));
    }
    for n in 1..=5 {
        assert_eq!(verify::check_g_index(n, 2).unwrap().observed, format!("{} policies", n + 1));
    }
}

#[test]
fn g_random_degenerate_and_single_state() {
    let r = verify::check_g_random(3, 2, 50, 9).unwrap();
    assert!(r.passed, "{r}");
    assert!(r.observed.starts_with("mean 4.0000, SE 0.0000"));
    let r = verify::check_g_random(1, 5, 10_000, 11).unwrap();
    assert!(r.passed, "{r}");
}

#[test]
fn h_chance_states_never_improvable() {
    for (n, k) in [(2, 2), (3, 3), (4, 3), (3, 5)] {
        let r = verify::check_h_chance_states(n, k, 1 << 20).unwrap();
        assert!(r.passed, "{r}");
    }
}

#[test]
fn h_all_higher_actions_improving_fails_from_four_states() {
    for n in 1..=3 {
        for k in 2..=5 {
            let r = verify::check_h_improving_actions(n, k, 1 << 20).unwrap();
            assert!(r.passed, "{r}");
        }
    }
    let r = verify::check_h_improving_actions(4, 4, 1 << 20).unwrap();
    assert!(!r.passed);
    let (h, layout) = build_h(4, 4).unwrap();
    let p = Policy::new(vec![1, 3, 1, 0, 0, 0, 0, 0]);
    let q = h.q_values(&p, &h.evaluate(&p).unwrap()).unwrap();
    let row: Vec<Rational> = (0..4).map(|a| q.get(3, a).clone()).collect();
    assert_eq!(row, vec![ratio(-77, 128), ratio(-163, 256), ratio(-159, 256), ratio(-151, 256)]);
    let set = improvement_set(&h, &p).unwrap();
    assert_eq!(set.actions(3), Some(&[3][..]));
    assert_eq!(layout.state_names[3], "s_4");
}

#[test]
fn h_counts_match_fixture_and_double() {
    let r = verify::check_h_counts().unwrap();
    assert!(r.passed, "{r}");
    for n in 1..=8 {
        assert_eq!(verify::h_count(n, 2).unwrap(), 1 << n);
    }
}

#[test]
fn h_switch_count_with_random_actions() {
    let r = verify::check_h_switch_count(3, 3, ActionSelector::RandomUniform, 7).unwrap();
    assert!(r.passed, "{r}");
    let r = verify::check_h_embedding(4, 2, ActionSelector::IndexMin, 0).unwrap();
    assert!(r.passed, "{r}");
}

#[test]
fn gamma_threshold_examples() {
    let (f, _) = build_f(2, 2).unwrap();
    let cert = gamma_threshold(&f, 1 << 10).unwrap();
    // Independent sweep: smallest nonzero gap over all 16 policies.
    let mut delta: Option<Rational> = None;
    for p in Policy::enumerate(4, 2) {
        let q = f.q_values(&p, &f.evaluate(&p).unwrap()).unwrap();
        for s in 0..4 {
            let gap = q.get(s, 0) - q.get(s, 1);
            let gap = if gap < int(0) { -gap } else { gap };
            assert_ne!(gap, int(0));
            if delta.as_ref().map_or(true, |d| &gap < d) {
                delta = Some(gap);
            }
        }
    }
    assert_eq!(Some(cert.delta.clone()), delta);
    assert_eq!(cert.horizon, 2);
    assert_eq!(cert.reward_bound, int(2));
    assert!(cert.safe_discount() > cert.gamma0 && cert.safe_discount() < int(1));

    let (g, _) = build_g(1, 3).unwrap();
    let cert = gamma_threshold(&g, 100).unwrap();
    assert_eq!(cert.gamma0, int(0));
    assert!(cert.exact);

    let big: FamilyDescriptor = "F:9,3".parse().unwrap();
    assert!(gamma_threshold(&big.build().unwrap().0, Budgets::default().delta).is_err());
}

#[test]
fn discount_transfer_examples() {
    for d in ["F:2,2", "G:2,3", "H:2,2", "G:3,3"] {
        let r = verify::check_discount_transfer(d.parse().unwrap(), 0, 1 << 16).unwrap();
        assert!(r.passed, "{r}");
    }
    let (f, _) = build_f(3, 3).unwrap();
    let d = f.with_discount(ratio(9999, 10000)).unwrap();
    assert!(d.validate().is_valid());
    assert_eq!(f.with_discount(int(1)).unwrap(), f);
    assert!(f.with_discount(int(0)).is_err());
}
