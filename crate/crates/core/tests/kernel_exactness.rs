use std::sync::Arc;

use opeinf_core::fixtures::{self, random};
use opeinf_core::kernel::{
    build_neighbor_graph, compute_propagation, individual_influence, run_kernel_fqe,
    KernelInfluence,
};
use opeinf_core::oracle::{brute_force_all, OracleStatus};
use opeinf_core::policy::{ConstantPolicy, EvaluationPolicy};
use opeinf_core::{
    initial_eval_set, AnalysisConfig, Dataset, EvaluationSetup, OpeError, SelfRemoval,
    StateActionMetric,
};

fn chain_setup(gamma: f64) -> EvaluationSetup {
    EvaluationSetup::new(
        AnalysisConfig {
            gamma,
            ..AnalysisConfig::default()
        },
        Arc::new(ConstantPolicy(0)),
        StateActionMetric::euclidean(1),
    )
}

/// Value iteration written directly from the per-row averaging definition, with
/// its own neighbor test.
fn naive_fqe(
    ds: &Dataset,
    weights: &[f64],
    policy: &dyn EvaluationPolicy,
    radius: f64,
    gamma: f64,
    horizon: usize,
) -> (Vec<f64>, Vec<f64>) {
    let ts = ds.transitions();
    let near = |x: &[f64], a: usize| -> Vec<usize> {
        (0..ts.len())
            .filter(|&k| {
                ts[k].action == a && {
                    let d2: f64 = x
                        .iter()
                        .zip(&ts[k].state)
                        .zip(weights)
                        .map(|((p, q), w)| w * (p - q) * (p - q))
                        .sum();
                    d2 < radius * radius
                }
            })
            .collect()
    };
    let here: Vec<Vec<usize>> = ts.iter().map(|t| near(&t.state, t.action)).collect();
    let next: Vec<Vec<usize>> = ts
        .iter()
        .map(|t| {
            if t.is_terminal {
                Vec::new()
            } else {
                near(&t.next_state, policy.action(&t.next_state))
            }
        })
        .collect();
    let mean = |set: &[usize], v: &dyn Fn(usize) -> f64| {
        if set.is_empty() {
            0.0
        } else {
            set.iter().map(|&k| v(k)).sum::<f64>() / set.len() as f64
        }
    };
    // q_next[k] holds Q_{t-1}(x'_k, pi(x'_k)).
    let mut q_next = vec![0.0; ts.len()];
    let mut q = vec![0.0; ts.len()];
    for _ in 0..horizon {
        let target = |k: usize| ts[k].reward + gamma * q_next[k];
        q = (0..ts.len()).map(|i| mean(&here[i], &target)).collect();
        q_next = (0..ts.len()).map(|i| mean(&next[i], &target)).collect();
    }
    (q, q_next)
}

#[test]
fn chain3_matches_hand_values() {
    let ds = fixtures::chain3();
    let a = chain_setup(1.0).analyze(&ds).unwrap();
    assert_eq!(a.v_hat, 1.0);
    assert_eq!(a.report.influence("t1"), None);
    assert_eq!(a.report.influence("t2"), Some(-1.0));
    assert_eq!(a.report.influence("t3"), Some(-1.0));
    assert_eq!(a.report.flagged_ids(), vec!["t2", "t3"]);

    let g = build_neighbor_graph(
        &ds,
        &StateActionMetric::euclidean(1),
        &ConstantPolicy(0),
        0.5,
    )
    .unwrap();
    let fqe = run_kernel_fqe(&g, &ds.rewards(), &[0], 0.5, 3).unwrap();
    assert_eq!(fqe.q_hat, vec![0.25, 0.5, 1.0]);
}

#[test]
fn chain3_individual_influences() {
    let ds = fixtures::chain3();
    let g = build_neighbor_graph(
        &ds,
        &StateActionMetric::euclidean(1),
        &ConstantPolicy(0),
        0.5,
    )
    .unwrap();
    let r = ds.rewards();
    let fqe = run_kernel_fqe(&g, &r, &[0], 1.0, 3).unwrap();
    let prop = compute_propagation(&g, 1.0, 3);
    assert_eq!(individual_influence(0, 2, &g, &fqe, &prop, &r, 1.0), -1.0);
    assert_eq!(individual_influence(0, 1, &g, &fqe, &prop, &r, 1.0), -1.0);
}

#[test]
fn empty_initial_set_is_undefined_everywhere() {
    let mut ts = fixtures::chain3().into_transitions();
    ts[0].action = 1;
    let ds = Dataset::new(ts).unwrap();
    let setup = chain_setup(1.0);
    assert!(matches!(
        setup.analyze(&ds),
        Err(OpeError::PolicyNotRepresented)
    ));
    assert!(matches!(
        setup.estimate_value(&ds),
        Err(OpeError::PolicyNotRepresented)
    ));
}

#[test]
fn forests_match_the_oracle() {
    let mut compared = 0;
    let mut undefined = 0;
    for seed in 0..300 {
        let p = random::disjoint_forest(seed);
        let Ok(analysis) = p.setup.analyze(&p.dataset) else {
            assert!(p.setup.estimate_value(&p.dataset).is_err());
            continue;
        };
        let batch = brute_force_all(&p.setup, &p.dataset, None).unwrap();
        for r in &batch.results {
            let unit = analysis.report.unit(&r.unit_id).unwrap();
            match (unit.influence, r.influence) {
                (Some(c), Some(o)) => {
                    assert!(
                        (c - o).abs() <= 1e-9,
                        "seed {seed} unit {}: {c} vs {o}",
                        r.unit_id
                    );
                    compared += 1;
                }
                (None, None) => {
                    assert_eq!(r.status, OracleStatus::UndefinedAfterRemoval);
                    undefined += 1;
                }
                other => panic!("seed {seed} unit {}: status mismatch {other:?}", r.unit_id),
            }
        }
    }
    assert!(compared > 1000, "only {compared} comparisons");
    assert!(undefined > 0);
}

#[test]
fn forests_individual_influence_matches_refit() {
    for seed in 0..100 {
        let p = random::disjoint_forest(seed);
        let ds = &p.dataset;
        let cfg = &p.setup.config;
        let metric = StateActionMetric::euclidean(1);
        let policy = ConstantPolicy(0);
        let horizon = cfg.horizon.unwrap();
        let g = build_neighbor_graph(ds, &metric, &policy, cfg.radius).unwrap();
        let r = ds.rewards();
        let d0 = initial_eval_set(ds, &policy);
        let Ok(fqe) = run_kernel_fqe(&g, &r, &d0, cfg.gamma, horizon) else {
            continue;
        };
        let prop = compute_propagation(&g, cfg.gamma, horizon);
        for j in 0..ds.len() {
            let Ok(without) = ds.without_transition(&ds.get(j).id) else {
                continue;
            };
            let q2 = naive_fqe(&without, &[1.0], &policy, cfg.radius, cfg.gamma, horizon).0;
            for i in 0..ds.len() {
                if i == j {
                    continue;
                }
                let i2 = without.position(&ds.get(i).id).unwrap();
                let expect = q2[i2] - fqe.q_hat[i];
                let got = individual_influence(i, j, &g, &fqe, &prop, &r, cfg.gamma);
                assert!(
                    (got - expect).abs() <= 1e-9,
                    "seed {seed} I[{i},{j}] {got} vs {expect}"
                );
            }
        }
    }
}

#[test]
fn matrix_fqe_matches_naive_iteration() {
    for seed in 0..20 {
        let p = random::overlapping(seed, 100);
        let ds = &p.dataset;
        let cfg = &p.setup.config;
        let horizon = ds.longest_trajectory();
        let g =
            build_neighbor_graph(ds, &p.setup.metric, p.setup.policy.as_ref(), cfg.radius).unwrap();
        let d0 = initial_eval_set(ds, p.setup.policy.as_ref());
        let fqe = run_kernel_fqe(&g, &ds.rewards(), &d0, cfg.gamma, horizon).unwrap();
        let (q, qn) = naive_fqe(
            ds,
            &[1.0, 1.0],
            p.setup.policy.as_ref(),
            cfg.radius,
            cfg.gamma,
            horizon,
        );
        for i in 0..ds.len() {
            assert!((q[i] - fqe.q_hat[i]).abs() <= 1e-12, "seed {seed} q[{i}]");
            assert!(
                (qn[i] - fqe.q_hat_prime[i]).abs() <= 1e-12,
                "seed {seed} q'[{i}]"
            );
        }
        let v: f64 = d0.iter().map(|&i| q[i]).sum::<f64>() / d0.len() as f64;
        assert!((v - fqe.v_hat).abs() <= 1e-12);
    }
}

#[test]
fn fqe_is_linear_in_rewards() {
    for seed in 0..10 {
        let p = random::overlapping(seed, 80);
        let ds = &p.dataset;
        let cfg = &p.setup.config;
        let g =
            build_neighbor_graph(ds, &p.setup.metric, p.setup.policy.as_ref(), cfg.radius).unwrap();
        let d0 = initial_eval_set(ds, p.setup.policy.as_ref());
        let r = ds.rewards();
        let r2: Vec<f64> = r
            .iter()
            .enumerate()
            .map(|(i, v)| (i as f64).sin() - v)
            .collect();
        let h = ds.longest_trajectory();
        let a = run_kernel_fqe(&g, &r, &d0, cfg.gamma, h).unwrap();
        let b = run_kernel_fqe(&g, &r2, &d0, cfg.gamma, h).unwrap();
        let mix: Vec<f64> = r.iter().zip(&r2).map(|(x, y)| 2.5 * x - 0.5 * y).collect();
        let c = run_kernel_fqe(&g, &mix, &d0, cfg.gamma, h).unwrap();
        for i in 0..ds.len() {
            let expect = 2.5 * a.q_hat[i] - 0.5 * b.q_hat[i];
            assert!((c.q_hat[i] - expect).abs() <= 1e-10);
        }
    }
}

#[test]
fn iteration_stops_changing_past_the_longest_trajectory() {
    let ds = fixtures::duplicated_chain3(3);
    let g = build_neighbor_graph(
        &ds,
        &StateActionMetric::euclidean(1),
        &ConstantPolicy(0),
        0.5,
    )
    .unwrap();
    let r = ds.rewards();
    let d0 = initial_eval_set(&ds, &ConstantPolicy(0));
    let a = run_kernel_fqe(&g, &r, &d0, 0.9, 3).unwrap();
    let b = run_kernel_fqe(&g, &r, &d0, 0.9, 4).unwrap();
    let c = run_kernel_fqe(&g, &r, &d0, 0.9, 10).unwrap();
    assert_eq!(a.q_hat, b.q_hat);
    assert_eq!(a.q_hat, c.q_hat);
}

#[test]
fn conventions_agree_outside_the_initial_set() {
    let ds = fixtures::duplicated_chain3(3);
    let g = build_neighbor_graph(
        &ds,
        &StateActionMetric::euclidean(1),
        &ConstantPolicy(0),
        0.5,
    )
    .unwrap();
    let r = ds.rewards();
    let d0 = initial_eval_set(&ds, &ConstantPolicy(0));
    let fqe = run_kernel_fqe(&g, &r, &d0, 1.0, 3).unwrap();
    let inf = KernelInfluence::compute(&g, &fqe, &r, 1.0);
    for j in 0..ds.len() {
        if d0.contains(&j) {
            continue;
        }
        assert_eq!(
            inf.total(j, SelfRemoval::ShrinkInitialSet),
            inf.total(j, SelfRemoval::FixedInitialSet)
        );
    }
}
