//! Linear least-squares FQE and exact leave-one-out updates.
//!
//! With `psi_i = psi(x_i, a_i)` and `psi'_i = psi(x'_i, pi_e(x'_i))` (zero for
//! terminal transitions) the fitted weights solve
//! `(Psi^T Psi - gamma Psi^T Psi') w = Psi^T r`. Removing transition `j` changes the
//! system matrix by two rank-one terms, so `w_{-j}` follows from two
//! Sherman-Morrison updates of the cached inverse.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::config::{AnalysisConfig, EstimatorKind, SelfRemoval};
use crate::data::{initial_eval_set, Dataset};
use crate::error::{OpeError, Result};
use crate::policy::EvaluationPolicy;
use crate::report::{InfluenceReport, RawInfluence, UnitKind};

const MAX_CONDITION: f64 = 1e12;
const MIN_DENOMINATOR: f64 = 1e-12;

/// Feature maps `(x, a) -> R^D`. The action count is part of the map so that
/// removing transitions never changes `D`.
#[derive(Debug, Clone)]
pub enum FeatureMap {
    /// `[x, onehot(a)]`
    StateOneHot { actions: usize },
    /// `[x, x_i x_k for i <= k, onehot(a)]`
    Poly2 { actions: usize },
    /// Exact lookup on `(state, action)`; unknown pairs map to zeros.
    Table(FeatureTable),
}

#[derive(Debug, Clone)]
pub struct FeatureTable {
    dim: usize,
    entries: HashMap<(Vec<u64>, usize), Vec<f64>>,
}

fn key(state: &[f64]) -> Vec<u64> {
    state.iter().map(|v| (v + 0.0).to_bits()).collect()
}

impl FeatureTable {
    pub fn new(
        dim: usize,
        entries: impl IntoIterator<Item = (Vec<f64>, usize, Vec<f64>)>,
    ) -> Result<Self> {
        let mut map = HashMap::new();
        for (state, action, features) in entries {
            if features.len() != dim {
                return Err(OpeError::InvalidConfig(format!(
                    "feature table entry has {} values, expected {dim}",
                    features.len()
                )));
            }
            map.insert((key(&state), action), features);
        }
        Ok(Self { dim, entries: map })
    }
}

impl FeatureMap {
    pub fn dim(&self, state_dim: usize) -> usize {
        match self {
            FeatureMap::StateOneHot { actions } => state_dim + actions,
            FeatureMap::Poly2 { actions } => state_dim + state_dim * (state_dim + 1) / 2 + actions,
            FeatureMap::Table(t) => t.dim,
        }
    }

    pub fn features(&self, state: &[f64], action: usize) -> Vec<f64> {
        let one_hot = |out: &mut Vec<f64>, actions: usize| {
            out.extend((0..actions).map(|b| if b == action { 1.0 } else { 0.0 }));
        };
        match self {
            FeatureMap::StateOneHot { actions } => {
                let mut out = state.to_vec();
                one_hot(&mut out, *actions);
                out
            }
            FeatureMap::Poly2 { actions } => {
                let mut out = state.to_vec();
                for i in 0..state.len() {
                    for k in i..state.len() {
                        out.push(state[i] * state[k]);
                    }
                }
                one_hot(&mut out, *actions);
                out
            }
            FeatureMap::Table(t) => t
                .entries
                .get(&(key(state), action))
                .cloned()
                .unwrap_or_else(|| vec![0.0; t.dim]),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            FeatureMap::StateOneHot { actions } => format!("state-onehot:{actions}"),
            FeatureMap::Poly2 { actions } => format!("poly2:{actions}"),
            FeatureMap::Table(t) => format!("table[{}x{}]", t.entries.len(), t.dim),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearModel {
    pub psi: DMatrix<f64>,
    /// Rows `psi(x'_i, pi_e(x'_i))`, zero for terminal transitions. Unscaled: the
    /// discount enters through `gamma` only.
    pub psi_next: DMatrix<f64>,
    pub rewards: DVector<f64>,
    pub c: DMatrix<f64>,
    pub c_inv: DMatrix<f64>,
    pub psi_t_r: DVector<f64>,
    pub w: DVector<f64>,
    pub gamma: f64,
    pub d0star: Vec<usize>,
    pub v_hat: f64,
    psi_d0_sum: DVector<f64>,
}

/// Fits `w = C^{-1} Psi^T r`, with `C = Psi^T Psi - gamma Psi^T Psi' + ridge I`.
pub fn fit_linear_fqe(
    dataset: &Dataset,
    features: &FeatureMap,
    policy: &dyn EvaluationPolicy,
    gamma: f64,
    ridge: f64,
) -> Result<LinearModel> {
    let d0star = initial_eval_set(dataset, policy);
    if d0star.is_empty() {
        return Err(OpeError::PolicyNotRepresented);
    }
    let n = dataset.len();
    let dim = features.dim(dataset.state_dim());
    let mut psi = DMatrix::zeros(n, dim);
    let mut psi_next = DMatrix::zeros(n, dim);
    for (i, t) in dataset.transitions().iter().enumerate() {
        let f = features.features(&t.state, t.action);
        psi.row_mut(i).copy_from_slice(&f);
        if !t.is_terminal {
            let f = features.features(&t.next_state, policy.action(&t.next_state));
            psi_next.row_mut(i).copy_from_slice(&f);
        }
    }
    let rewards = DVector::from_vec(dataset.rewards());
    let psi_t = psi.transpose();
    let mut c = &psi_t * &psi - gamma * (&psi_t * &psi_next);
    for k in 0..dim {
        c[(k, k)] += ridge;
    }
    check_condition(&c)?;
    let c_inv = c
        .clone()
        .try_inverse()
        .ok_or_else(|| OpeError::Unidentifiable {
            condition: f64::INFINITY,
            directions: Vec::new(),
        })?;
    let psi_t_r = &psi_t * &rewards;
    let w = &c_inv * &psi_t_r;
    let mut psi_d0_sum = DVector::zeros(dim);
    for &i in &d0star {
        psi_d0_sum += psi.row(i).transpose();
    }
    let v_hat = psi_d0_sum.dot(&w) / d0star.len() as f64;
    Ok(LinearModel {
        psi,
        psi_next,
        rewards,
        c,
        c_inv,
        psi_t_r,
        w,
        gamma,
        d0star,
        v_hat,
        psi_d0_sum,
    })
}

fn check_condition(c: &DMatrix<f64>) -> Result<()> {
    let svd = c.clone().svd(false, true);
    let s = &svd.singular_values;
    let s_max = s.max();
    let s_min = s.min();
    let condition = if s_min > 0.0 {
        s_max / s_min
    } else {
        f64::INFINITY
    };
    if condition > MAX_CONDITION || !condition.is_finite() {
        let v_t = svd.v_t.expect("requested");
        let directions = s
            .iter()
            .enumerate()
            .filter(|&(_, &sv)| sv <= s_max / MAX_CONDITION || sv == s_min)
            .map(|(k, _)| v_t.row(k).iter().copied().collect())
            .collect();
        return Err(OpeError::Unidentifiable {
            condition,
            directions,
        });
    }
    Ok(())
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn len(&self) -> usize {
        self.psi.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.nrows() == 0
    }

    /// `q_hat(x_i, a_i)` for every transition.
    pub fn q_hat(&self) -> DVector<f64> {
        &self.psi * &self.w
    }

    /// `w_{-j}` by two Sherman-Morrison updates, without forming any `D x D`
    /// product beyond matrix-vector work. `None` when either update denominator
    /// vanishes.
    pub fn weights_without(&self, j: usize) -> Option<DVector<f64>> {
        let psi_j = self.psi.row(j).transpose();
        let psi_n = self.psi_next.row(j).transpose();
        let a = &self.c_inv * &psi_j;
        let b = self.c_inv.tr_mul(&psi_j);
        let den1 = 1.0 - psi_j.dot(&a);
        if den1.abs() < MIN_DENOMINATOR {
            return None;
        }
        let z = &self.psi_t_r - self.rewards[j] * &psi_j;
        let bz = &self.c_inv * &z + &a * (b.dot(&z) / den1);
        let b_psi = &a / den1;
        let den2 = 1.0 + self.gamma * psi_n.dot(&b_psi);
        if den2.abs() < MIN_DENOMINATOR {
            return None;
        }
        Some(&bz - &b_psi * (self.gamma * psi_n.dot(&bz) / den2))
    }

    /// Explicit `(C_{-j})^{-1}` via the same two updates in matrix form.
    pub fn inverse_without(&self, j: usize) -> Option<DMatrix<f64>> {
        let psi_j = self.psi.row(j).transpose();
        let psi_n = self.psi_next.row(j).transpose();
        let den1 = 1.0 - (psi_j.transpose() * &self.c_inv * &psi_j)[(0, 0)];
        if den1.abs() < MIN_DENOMINATOR {
            return None;
        }
        let b = &self.c_inv + &self.c_inv * &psi_j * psi_j.transpose() * &self.c_inv / den1;
        let den2 = 1.0 + self.gamma * (psi_n.transpose() * &b * &psi_j)[(0, 0)];
        if den2.abs() < MIN_DENOMINATOR {
            return None;
        }
        Some(&b - self.gamma * &b * &psi_j * psi_n.transpose() * &b / den2)
    }

    /// `I_{i,j} = psi_i^T (w_{-j} - w)` for each requested `i`.
    pub fn individual_influences(&self, j: usize, rows: &[usize]) -> Option<Vec<f64>> {
        let dw = self.weights_without(j)? - &self.w;
        Some(
            rows.iter()
                .map(|&i| self.psi.row(i).transpose().dot(&dw))
                .collect(),
        )
    }

    /// Total influence on `v_hat`. `None` when the update is singular or `D0*`
    /// would become empty.
    pub fn total_influence(&self, j: usize, convention: SelfRemoval) -> Option<f64> {
        let m = self.d0star.len();
        let inside = self.d0star.contains(&j);
        if inside && m == 1 {
            return None;
        }
        let w_j = self.weights_without(j)?;
        if !inside {
            return Some(self.psi_d0_sum.dot(&(w_j - &self.w)) / m as f64);
        }
        let psi_j = self.psi.row(j).transpose();
        match convention {
            SelfRemoval::ShrinkInitialSet => {
                Some((&self.psi_d0_sum - &psi_j).dot(&w_j) / (m - 1) as f64 - self.v_hat)
            }
            SelfRemoval::FixedInitialSet => {
                Some((&self.psi_d0_sum - &psi_j).dot(&(w_j - &self.w)) / m as f64)
            }
        }
    }
}

/// Influence report over all transitions.
pub fn linear_influence_report(
    dataset: &Dataset,
    config: &AnalysisConfig,
    model: &LinearModel,
) -> InfluenceReport {
    let raw = (0..dataset.len())
        .into_par_iter()
        .map(|j| {
            let id = dataset.get(j).id.clone();
            match model.total_influence(j, config.self_removal) {
                Some(v) => (id, RawInfluence::Value(v)),
                None => (id, RawInfluence::Undefined),
            }
        })
        .collect();
    InfluenceReport::build(
        UnitKind::Transition,
        EstimatorKind::LinearFqe,
        model.v_hat,
        config.influence_threshold,
        config.v_max,
        raw,
    )
}
