use mdp_lab::simulator::regret_from_counts;
use mdp_lab::{
    run_episode, run_experiment, run_replications, step_chain, Analysis, Controller, CountTables,
    MdpModel, PolicyKind, RngStream, SimConfig,
};

fn benchmark() -> MdpModel {
    MdpModel::new(
        vec![vec![0.13, 0.18], vec![0.47, 0.71], vec![0.89, 0.63]],
        vec![
            vec![vec![0.04, 0.69, 0.27], vec![0.28, 0.68, 0.04]],
            vec![vec![0.88, 0.01, 0.11], vec![0.26, 0.33, 0.41]],
            vec![vec![0.02, 0.46, 0.52], vec![0.43, 0.35, 0.22]],
        ],
    )
    .unwrap()
}

fn rig() -> CountTables {
    CountTables::from_transition_counts(vec![
        vec![vec![8, 1, 1], vec![1, 1, 8]],
        vec![vec![1, 1, 8], vec![8, 1, 1]],
        vec![vec![8, 1, 1], vec![1, 1, 8]],
    ])
    .unwrap()
}

#[test]
fn identical_configs_give_identical_curves() {
    for policy in PolicyKind::ALL {
        let cfg = SimConfig::new(benchmark(), policy, 500, 4, 99);
        assert_eq!(
            run_experiment(&cfg).unwrap(),
            run_experiment(&cfg).unwrap(),
            "{policy}"
        );
    }
}

#[test]
fn action_sequences_are_reproducible() {
    for policy in PolicyKind::ALL {
        let cfg = SimConfig::new(benchmark(), policy, 400, 1, 5);
        let a = run_episode(&cfg, 0).unwrap();
        let b = run_episode(&cfg, 0).unwrap();
        assert_eq!(a.actions, b.actions, "{policy}");
        assert_eq!(a.counts, b.counts, "{policy}");
    }
}

#[test]
fn counts_are_conserved_and_audit_is_exact() {
    let analysis = Analysis::new(&benchmark()).unwrap();
    for rigged in [false, true] {
        for policy in PolicyKind::ADAPTIVE {
            let mut cfg = SimConfig::new(benchmark(), policy, 1_000, 3, 8);
            let prior = if rigged { 60 } else { 0 };
            if rigged {
                cfg.rigged_prior = Some(rig());
            }
            for e in run_replications(&cfg).unwrap() {
                let total = e.counts.total_activations();
                assert_eq!(total, (1_000 - (prior + 1) + 1) as u64 + prior as u64);
                let audit = regret_from_counts(&analysis, &e.played_activations());
                assert_eq!(audit, e.series.last());
                assert!(e.series.values()[..prior].iter().all(|&r| r == 0.0));
            }
        }
    }
}

/// An untried action's index is `r + max v`, an upper bound on every tried
/// action's index, so it can only lose to a tried action with larger reward.
#[test]
fn ucb_untried_actions_yield_only_to_larger_rewards() {
    let model = benchmark();
    let shape: Vec<usize> = (0..model.num_states())
        .map(|x| model.num_actions(x))
        .collect();
    let controller = Controller::new(PolicyKind::Ucb, &model).unwrap();
    for seed in 0..5 {
        let mut chain = RngStream::new(seed, 0);
        let mut rng = RngStream::new(seed, 1);
        let mut counts = CountTables::new(&shape);
        let mut x = 0;
        for _ in 0..300 {
            let a = controller.choose(&model, &counts, x, &mut rng).unwrap();
            if counts.activations(x, a) > 0 {
                for u in (0..shape[x]).filter(|&u| counts.activations(x, u) == 0) {
                    assert!(
                        model.reward(x, a) >= model.reward(x, u),
                        "seed {seed}: x{x} chose tried a{a} over untried a{u}"
                    );
                }
            }
            let y = step_chain(&model, x, a, &mut chain);
            counts.record_transition(x, a, y).unwrap();
            x = y;
        }
    }
}

#[test]
fn adaptive_regret_grows_slowly_uniform_linearly() {
    const T: usize = 10_000;
    let uniform =
        run_experiment(&SimConfig::new(benchmark(), PolicyKind::Uniform, T, 10, 3)).unwrap();
    let rate = uniform.final_mean() / T as f64;
    assert!(rate > 0.1, "uniform rate {rate}");
    for policy in [PolicyKind::Ucb, PolicyKind::Ps] {
        let c = run_experiment(&SimConfig::new(benchmark(), policy, T, 10, 3)).unwrap();
        let ratios: Vec<f64> = (1_000..=T)
            .map(|t| c.mean[t - 1] / (t as f64).ln())
            .collect();
        let hi = ratios.iter().cloned().fold(f64::MIN, f64::max);
        let lo = ratios.iter().cloned().fold(f64::MAX, f64::min);
        assert!(hi - lo < 2.0, "{policy}: R/ln t in [{lo}, {hi}]");
        assert!(
            c.final_mean() / (T as f64) < 0.1 * rate,
            "{policy}: linear rate"
        );
    }
}
