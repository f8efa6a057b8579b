use serde::{Deserialize, Serialize};

use super::graph::NeighborGraph;
use crate::data::Dataset;
use crate::error::{OpeError, Result};

/// Dense `Phi_T` and `Phi'_T`. Quadratic memory; meant for small problems and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationMatrices {
    pub phi: Vec<Vec<f64>>,
    pub phi_prime: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FqeResult {
    /// Value at each `(x_i, a_i)`.
    pub q_hat: Vec<f64>,
    /// Value at each `(x'_i, pi_e(x'_i))`.
    pub q_hat_prime: Vec<f64>,
    pub v_hat: f64,
    pub d0star: Vec<usize>,
    pub horizon: usize,
}

/// The configured horizon, or the longest trajectory when none is given. Warns when
/// the horizon is too short for the fixed point to be reached.
pub fn resolve_horizon(requested: Option<usize>, dataset: &Dataset) -> usize {
    let longest = dataset.longest_trajectory().max(1);
    match requested {
        Some(h) => {
            if h < longest {
                log::warn!(
                    "horizon {h} is shorter than the longest trajectory ({longest}); \
                     values will not have converged"
                );
            }
            h
        }
        None => longest,
    }
}

/// Iterates `Phi'_t = M' + gamma M' Phi'_{t-1}` and `Phi_t = M (I + gamma Phi'_{t-1})`
/// with sparse-times-dense products.
pub fn compute_propagation(
    graph: &NeighborGraph,
    gamma: f64,
    horizon: usize,
) -> PropagationMatrices {
    assert!(horizon >= 1);
    let n = graph.len();
    let mp_dense = graph.m_prime().to_dense();
    let mut phi_prime_prev = vec![vec![0.0; n]; n];
    let mut phi_prime = mp_dense.clone();
    for _ in 1..horizon {
        phi_prime_prev = phi_prime;
        let prod = graph.m_prime().mul_dense(&phi_prime_prev);
        phi_prime = mp_dense
            .iter()
            .zip(prod)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + gamma * y).collect())
            .collect();
    }
    // Phi_T needs Phi'_{T-1}, which is zero when T = 1.
    let inner: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = phi_prime_prev[i].iter().map(|v| gamma * v).collect();
            row[i] += 1.0;
            row
        })
        .collect();
    let phi = graph.m().mul_dense(&inner);
    PropagationMatrices { phi, phi_prime }
}

/// Runs `horizon` FQE backups. `q_hat` uses `q'_{T-1}` and `q_hat_prime` is `q'_T`.
pub fn run_kernel_fqe(
    graph: &NeighborGraph,
    rewards: &[f64],
    d0star: &[usize],
    gamma: f64,
    horizon: usize,
) -> Result<FqeResult> {
    assert_eq!(rewards.len(), graph.len());
    assert!(horizon >= 1);
    if d0star.is_empty() {
        return Err(OpeError::PolicyNotRepresented);
    }
    let mut q_prev = vec![0.0; graph.len()];
    let mut q_prime = graph.m_prime().mul_vec(rewards);
    for _ in 1..horizon {
        q_prev = q_prime;
        let target: Vec<f64> = rewards
            .iter()
            .zip(&q_prev)
            .map(|(r, q)| r + gamma * q)
            .collect();
        q_prime = graph.m_prime().mul_vec(&target);
    }
    let target: Vec<f64> = rewards
        .iter()
        .zip(&q_prev)
        .map(|(r, q)| r + gamma * q)
        .collect();
    let q_hat = graph.m().mul_vec(&target);
    let v_hat = d0star.iter().map(|&i| q_hat[i]).sum::<f64>() / d0star.len() as f64;
    Ok(FqeResult {
        q_hat,
        q_hat_prime: q_prime,
        v_hat,
        d0star: d0star.to_vec(),
        horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::initial_eval_set;
    use crate::fixtures;
    use crate::kernel::graph::build_neighbor_graph;
    use crate::metric::StateActionMetric;
    use crate::policy::ConstantPolicy;

    fn chain3_graph() -> (Dataset, NeighborGraph) {
        let ds = fixtures::chain3();
        let g = build_neighbor_graph(
            &ds,
            &StateActionMetric::euclidean(1),
            &ConstantPolicy(0),
            0.5,
        )
        .unwrap();
        (ds, g)
    }

    #[test]
    fn chain3_values() {
        let (ds, g) = chain3_graph();
        let d0 = initial_eval_set(&ds, &ConstantPolicy(0));
        let fqe = run_kernel_fqe(&g, &ds.rewards(), &d0, 1.0, 3).unwrap();
        assert_eq!(fqe.q_hat, vec![1.0, 1.0, 1.0]);
        assert_eq!(fqe.v_hat, 1.0);
        let half = run_kernel_fqe(&g, &ds.rewards(), &d0, 0.5, 3).unwrap();
        assert_eq!(half.q_hat, vec![0.25, 0.5, 1.0]);
    }

    #[test]
    fn chain3_propagation() {
        let (_, g) = chain3_graph();
        let p = compute_propagation(&g, 1.0, 3);
        assert_eq!(
            p.phi,
            vec![
                vec![1.0, 1.0, 1.0],
                vec![0.0, 1.0, 1.0],
                vec![0.0, 0.0, 1.0]
            ]
        );
        let one = compute_propagation(&g, 1.0, 1);
        assert_eq!(one.phi, g.m().to_dense());
        assert_eq!(one.phi_prime, g.m_prime().to_dense());
        let zero = compute_propagation(&g, 0.0, 5);
        assert_eq!(zero.phi, g.m().to_dense());
        assert_eq!(zero.phi_prime, g.m_prime().to_dense());
    }

    #[test]
    fn empty_initial_set_is_an_error() {
        let (ds, g) = chain3_graph();
        let err = run_kernel_fqe(&g, &ds.rewards(), &[], 1.0, 3).unwrap_err();
        assert!(matches!(err, OpeError::PolicyNotRepresented));
    }

    #[test]
    fn horizon_defaults_to_longest_trajectory() {
        let ds = fixtures::line_chain(&[0.0; 7], true);
        assert_eq!(resolve_horizon(None, &ds), 7);
        assert_eq!(resolve_horizon(Some(2), &ds), 2);
    }
}
