//! Closed-form leave-one-out influence for kernel FQE.

use rayon::prelude::*;

use super::fqe::{FqeResult, PropagationMatrices};
use super::graph::NeighborGraph;
use crate::config::{AnalysisConfig, EstimatorKind, SelfRemoval};
use crate::data::Dataset;
use crate::report::{InfluenceReport, RawInfluence, UnitKind};

/// Rows of `Phi_T` for the members of `D0*`, stored column-wise so that
/// `column(k)[a] = Phi[d0star[a], k]`.
#[derive(Debug, Clone)]
pub struct InitialPropagation {
    d0star: Vec<usize>,
    columns: Vec<Vec<f64>>,
}

impl InitialPropagation {
    /// Computes each row as `e_i^T M sum_t (gamma M')^(t-1)` by repeated sparse
    /// vector-matrix products.
    pub fn compute(graph: &NeighborGraph, d0star: &[usize], gamma: f64, horizon: usize) -> Self {
        let n = graph.len();
        let rows: Vec<Vec<f64>> = d0star
            .par_iter()
            .map(|&i| {
                let mut u = vec![0.0; n];
                for (c, v) in graph.m().row(i) {
                    u[c] = v;
                }
                let mut acc = u.clone();
                for _ in 1..horizon {
                    u = graph.m_prime().left_mul_vec(&u);
                    for (a, x) in acc.iter_mut().zip(u.iter_mut()) {
                        *x *= gamma;
                        *a += *x;
                    }
                }
                acc
            })
            .collect();
        let mut columns = vec![vec![0.0; d0star.len()]; n];
        for (a, row) in rows.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                columns[k][a] = v;
            }
        }
        Self {
            d0star: d0star.to_vec(),
            columns,
        }
    }

    pub fn from_dense(prop: &PropagationMatrices, d0star: &[usize]) -> Self {
        let n = prop.phi.len();
        let columns = (0..n)
            .map(|k| d0star.iter().map(|&i| prop.phi[i][k]).collect())
            .collect();
        Self {
            d0star: d0star.to_vec(),
            columns,
        }
    }

    pub fn d0star(&self) -> &[usize] {
        &self.d0star
    }

    pub fn phi(&self, a: usize, k: usize) -> f64 {
        self.columns[k][a]
    }
}

/// Precomputed state for evaluating `I_{i,j}` and `I_j` for many `j`.
pub struct KernelInfluence<'a> {
    graph: &'a NeighborGraph,
    fqe: &'a FqeResult,
    rewards: &'a [f64],
    gamma: f64,
    prop: InitialPropagation,
    d0_slot: Vec<Option<usize>>,
}

impl<'a> KernelInfluence<'a> {
    pub fn new(
        graph: &'a NeighborGraph,
        fqe: &'a FqeResult,
        rewards: &'a [f64],
        gamma: f64,
        prop: InitialPropagation,
    ) -> Self {
        assert_eq!(prop.d0star(), fqe.d0star.as_slice());
        let mut d0_slot = vec![None; graph.len()];
        for (a, &i) in fqe.d0star.iter().enumerate() {
            d0_slot[i] = Some(a);
        }
        Self {
            graph,
            fqe,
            rewards,
            gamma,
            prop,
            d0_slot,
        }
    }

    pub fn compute(
        graph: &'a NeighborGraph,
        fqe: &'a FqeResult,
        rewards: &'a [f64],
        gamma: f64,
    ) -> Self {
        let prop = InitialPropagation::compute(graph, &fqe.d0star, gamma, fqe.horizon);
        Self::new(graph, fqe, rewards, gamma, prop)
    }

    /// Per-`k` coefficient of `Phi_ik` in `I_{i,j}`: the change in `q'_k` caused by
    /// removing `j`, times `gamma`.
    fn mediated_terms(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let y_j = self.rewards[j] + self.gamma * self.fqe.q_hat_prime[j];
        self.graph.dependents(j).iter().map(move |&k| {
            let n_k = self.graph.next_count(k);
            let q_k = self.fqe.q_hat_prime[k];
            let delta = if n_k > 1 {
                (q_k - y_j) / (n_k - 1) as f64
            } else {
                // j was the sole neighbor: q'_k drops to zero.
                -q_k
            };
            (k, self.gamma * delta)
        })
    }

    fn direct_term(&self, i: usize, j: usize) -> f64 {
        if i == j || !self.graph.is_neighbor(i, j) {
            return 0.0;
        }
        let n_i = self.graph.count(i);
        assert!(
            n_i >= 2,
            "neighbor {j} of {i} implies at least two neighbors"
        );
        let y_j = self.rewards[j] + self.gamma * self.fqe.q_hat_prime[j];
        (self.fqe.q_hat[i] - y_j) / (n_i - 1) as f64
    }

    /// `I_{i,j}` for every `i` in `D0*` (in `D0*` order). The entry for `i = j` is
    /// meaningless and left at zero.
    pub fn individual_all(&self, j: usize) -> Vec<f64> {
        let d0 = self.prop.d0star();
        let mut out = vec![0.0; d0.len()];
        for i in self.graph.neighbors(j) {
            if let Some(a) = self.d0_slot[i] {
                out[a] = self.direct_term(i, j);
            }
        }
        for (k, coef) in self.mediated_terms(j) {
            for (a, o) in out.iter_mut().enumerate() {
                *o += self.prop.phi(a, k) * coef;
            }
        }
        if let Some(a) = self.d0_slot[j] {
            out[a] = 0.0;
        }
        out
    }

    /// `I_{i,j}` for a single `i` in `D0*`.
    pub fn individual(&self, i: usize, j: usize) -> f64 {
        let a = self.d0_slot[i].expect("i must belong to D0*");
        let mut v = self.direct_term(i, j);
        for (k, coef) in self.mediated_terms(j) {
            v += self.prop.phi(a, k) * coef;
        }
        v
    }

    /// Total influence `I_j`, or `None` when removing `j` empties `D0*`.
    pub fn total(&self, j: usize, convention: SelfRemoval) -> Option<f64> {
        let d0 = self.prop.d0star();
        let inside = self.d0_slot[j];
        let remaining = d0.len() - usize::from(inside.is_some());
        if remaining == 0 {
            return None;
        }
        let ind = self.individual_all(j);
        match (inside, convention) {
            (None, _) => Some(ind.iter().sum::<f64>() / d0.len() as f64),
            (Some(slot), SelfRemoval::ShrinkInitialSet) => {
                let sum: f64 = d0
                    .iter()
                    .enumerate()
                    .filter(|&(a, _)| a != slot)
                    .map(|(a, &i)| self.fqe.q_hat[i] + ind[a])
                    .sum();
                Some(sum / remaining as f64 - self.fqe.v_hat)
            }
            (Some(_), SelfRemoval::FixedInitialSet) => {
                Some(ind.iter().sum::<f64>() / d0.len() as f64)
            }
        }
    }
}

/// `I_{i,j}` for arbitrary `i != j` using dense propagation matrices.
pub fn individual_influence(
    i: usize,
    j: usize,
    graph: &NeighborGraph,
    fqe: &FqeResult,
    prop: &PropagationMatrices,
    rewards: &[f64],
    gamma: f64,
) -> f64 {
    assert_ne!(i, j, "self-removal is handled by the total influence");
    let y_j = rewards[j] + gamma * fqe.q_hat_prime[j];
    let mut v = 0.0;
    if graph.is_neighbor(i, j) {
        let n_i = graph.count(i);
        assert!(n_i >= 2);
        v += (fqe.q_hat[i] - y_j) / (n_i - 1) as f64;
    }
    for &k in graph.dependents(j) {
        let n_k = graph.next_count(k);
        let delta = if n_k > 1 {
            (fqe.q_hat_prime[k] - y_j) / (n_k - 1) as f64
        } else {
            -fqe.q_hat_prime[k]
        };
        v += gamma * prop.phi[i][k] * delta;
    }
    v
}

/// The neighbor-count threshold `N*_c = v_max / (|v_hat| * threshold)` above which
/// transitions are skipped. `None` when no cutoff applies.
pub fn cutoff_count(config: &AnalysisConfig, v_hat: f64) -> Option<f64> {
    match config.v_max {
        Some(v_max) if v_hat != 0.0 => Some(v_max / (v_hat.abs() * config.influence_threshold)),
        _ => None,
    }
}

/// Influence report over all transitions. Transitions whose dependent count
/// reaches the cutoff are skipped; flagged transitions whose next pair has no
/// neighbors and that are not terminal are marked as dead ends.
pub fn influence_report(
    dataset: &Dataset,
    config: &AnalysisConfig,
    graph: &NeighborGraph,
    fqe: &FqeResult,
    influence: &KernelInfluence<'_>,
) -> InfluenceReport {
    let cutoff = cutoff_count(config, fqe.v_hat);
    let raw: Vec<(String, RawInfluence)> = (0..dataset.len())
        .into_par_iter()
        .map(|j| {
            let id = dataset.get(j).id.clone();
            if let Some(c) = cutoff {
                if graph.dependent_count(j) as f64 >= c {
                    return (id, RawInfluence::Skipped);
                }
            }
            let r = match influence.total(j, config.self_removal) {
                Some(v) => RawInfluence::Value(v),
                None => RawInfluence::Undefined,
            };
            (id, r)
        })
        .collect();
    let mut report = InfluenceReport::build(
        UnitKind::Transition,
        EstimatorKind::KernelFqe,
        fqe.v_hat,
        config.influence_threshold,
        config.v_max,
        raw,
    );
    for (j, unit) in report.units.iter_mut().enumerate() {
        unit.dead_end = unit.flagged && graph.next_count(j) == 0 && !dataset.get(j).is_terminal;
    }
    report
}
