//! Importance-sampling estimators and exact trajectory influences.
//!
//! Trajectories are aligned on `step_index` and padded to a common horizon `H`.
//! Padding steps carry the last cumulative weight forward and contribute zero
//! reward and zero baseline terms.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::{AnalysisConfig, EstimatorKind};
use crate::data::Dataset;
use crate::error::{OpeError, Result};
use crate::metric::StateActionMetric;
use crate::policy::EvaluationPolicy;
use crate::report::{InfluenceReport, RawInfluence, UnitKind};

/// Externally supplied `q~(x, a)` and `v~(x)` for the doubly robust estimators.
pub trait ValueBaselines: Send + Sync {
    fn q(&self, state: &[f64], action: usize) -> f64;
    fn v(&self, state: &[f64]) -> f64;

    fn describe(&self) -> String {
        "external".to_string()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroBaselines;

impl ValueBaselines for ZeroBaselines {
    fn q(&self, _state: &[f64], _action: usize) -> f64 {
        0.0
    }

    fn v(&self, _state: &[f64]) -> f64 {
        0.0
    }

    fn describe(&self) -> String {
        "zero".to_string()
    }
}

pub struct FnBaselines<Q, V> {
    pub q: Q,
    pub v: V,
}

impl<Q, V> ValueBaselines for FnBaselines<Q, V>
where
    Q: Fn(&[f64], usize) -> f64 + Send + Sync,
    V: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn q(&self, state: &[f64], action: usize) -> f64 {
        (self.q)(state, action)
    }

    fn v(&self, state: &[f64]) -> f64 {
        (self.v)(state)
    }
}

/// Nearest-neighbor value estimates frozen from a kernel FQE fit: `q~(x, a)` is the
/// mean backed-up target `r_j + gamma q'_j` over stored transitions within the radius,
/// zero when there are none, and `v~(x) = q~(x, pi_e(x))`.
pub struct KernelBaselines {
    points: Vec<(Vec<f64>, usize, f64)>,
    metric: StateActionMetric,
    radius: f64,
    policy: Arc<dyn EvaluationPolicy>,
}

impl KernelBaselines {
    pub fn new(
        points: Vec<(Vec<f64>, usize, f64)>,
        metric: StateActionMetric,
        radius: f64,
        policy: Arc<dyn EvaluationPolicy>,
    ) -> Self {
        Self {
            points,
            metric,
            radius,
            policy,
        }
    }
}

impl ValueBaselines for KernelBaselines {
    fn q(&self, state: &[f64], action: usize) -> f64 {
        let (sum, count) = self
            .points
            .iter()
            .filter(|(x, a, _)| self.metric.within(state, action, x, *a, self.radius))
            .fold((0.0, 0usize), |(s, c), (_, _, y)| (s + y, c + 1));
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    fn v(&self, state: &[f64]) -> f64 {
        self.q(state, self.policy.action(state))
    }

    fn describe(&self) -> String {
        format!("kernel[{}]", self.points.len())
    }
}

/// Per-trajectory weights, rewards and baselines on a common horizon, plus the
/// aggregates every estimator and influence needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryWeights {
    pub ids: Vec<String>,
    pub gamma: f64,
    pub horizon: usize,
    /// `w[n][t] = w_{0:t}` for trajectory `n`.
    pub w: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

/// Builds padded per-step quantities. Errors on the first transition (in dataset
/// order) without a behavior probability.
pub fn compute_weights(
    dataset: &Dataset,
    policy: &dyn EvaluationPolicy,
    gamma: f64,
    baselines: &dyn ValueBaselines,
) -> Result<TrajectoryWeights> {
    if let Some(t) = dataset
        .transitions()
        .iter()
        .find(|t| t.behavior_prob.is_none())
    {
        return Err(OpeError::MissingBehaviorProb { id: t.id.clone() });
    }
    let horizon = dataset
        .transitions()
        .iter()
        .map(|t| t.step_index + 1)
        .max()
        .unwrap_or(0);
    let n = dataset.trajectories().len();
    let mut out = TrajectoryWeights {
        ids: dataset.trajectories().keys().cloned().collect(),
        gamma,
        horizon,
        w: vec![vec![0.0; horizon]; n],
        r: vec![vec![0.0; horizon]; n],
        q: vec![vec![0.0; horizon]; n],
        v: vec![vec![0.0; horizon]; n],
    };
    for (k, members) in dataset.trajectories().values().enumerate() {
        let mut rho = vec![1.0; horizon];
        for &m in members {
            let t = dataset.get(m);
            let s = t.step_index;
            rho[s] = if policy.action(&t.state) == t.action {
                1.0 / t.behavior_prob.expect("checked above")
            } else {
                0.0
            };
            out.r[k][s] = t.reward;
            out.q[k][s] = baselines.q(&t.state, t.action);
            out.v[k][s] = baselines.v(&t.state);
        }
        let mut acc = 1.0;
        for (w, r) in out.w[k].iter_mut().zip(&rho) {
            acc *= r;
            *w = acc;
        }
    }
    Ok(out)
}

impl TrajectoryWeights {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// `w_{0:T}` of trajectory `n`.
    pub fn final_weight(&self, n: usize) -> f64 {
        self.w[n].last().copied().unwrap_or(1.0)
    }

    /// Discounted return `g_T`.
    pub fn discounted_return(&self, n: usize) -> f64 {
        discounted(self.gamma, self.r[n].iter().copied())
    }

    fn prev_weight(&self, n: usize, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.w[n][t - 1]
        }
    }

    /// The trajectory's summand in the unweighted estimators.
    fn contribution(&self, method: EstimatorKind, n: usize) -> f64 {
        match method {
            EstimatorKind::Is => self.final_weight(n) * self.discounted_return(n),
            EstimatorKind::Pdis => discounted(
                self.gamma,
                (0..self.horizon).map(|t| self.w[n][t] * self.r[n][t]),
            ),
            EstimatorKind::Dr => discounted(
                self.gamma,
                (0..self.horizon).map(|t| {
                    self.w[n][t] * self.r[n][t] - self.w[n][t] * self.q[n][t]
                        + self.prev_weight(n, t) * self.v[n][t]
                }),
            ),
            _ => unreachable!("not an unweighted estimator"),
        }
    }

    /// Value estimate for any importance-sampling method.
    pub fn estimate(&self, method: EstimatorKind) -> Result<f64> {
        Ok(PreparedIs::new(self, method)?.v_hat)
    }
}

fn discounted(gamma: f64, xs: impl Iterator<Item = f64>) -> f64 {
    let mut g = 1.0;
    let mut total = 0.0;
    for x in xs {
        total += g * x;
        g *= gamma;
    }
    total
}

/// Cached aggregates for O(1) (O(H) for WDR) trajectory influences.
pub struct PreparedIs<'a> {
    weights: &'a TrajectoryWeights,
    method: EstimatorKind,
    pub v_hat: f64,
    contributions: Vec<f64>,
    total_weight: f64,
    wdr: Option<WdrCache>,
}

struct WdrCache {
    /// `W_t`, and `W_{t-1}` with `W_{-1} = N`.
    w_t: Vec<f64>,
    w_prev: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

/// `sum_n w_n x_n / W`, with the empty-weight convention `0 / 0 = 0`.
fn weighted_mean(sum: f64, weight: f64) -> f64 {
    if weight == 0.0 {
        0.0
    } else {
        sum / weight
    }
}

impl<'a> PreparedIs<'a> {
    pub fn new(weights: &'a TrajectoryWeights, method: EstimatorKind) -> Result<Self> {
        assert!(method.is_trajectory_based(), "{method} is not an IS method");
        let n = weights.len();
        if n == 0 {
            return Err(OpeError::EmptyDataset);
        }
        let mut contributions = Vec::new();
        let mut total_weight = 0.0;
        let mut wdr = None;
        let v_hat = match method {
            EstimatorKind::Is | EstimatorKind::Pdis | EstimatorKind::Dr => {
                contributions = (0..n).map(|k| weights.contribution(method, k)).collect();
                contributions.iter().sum::<f64>() / n as f64
            }
            EstimatorKind::Wis => {
                total_weight = (0..n).map(|k| weights.final_weight(k)).sum();
                if total_weight == 0.0 {
                    return Err(OpeError::AllWeightsZero);
                }
                let s: f64 = (0..n)
                    .map(|k| weights.final_weight(k) * weights.discounted_return(k))
                    .sum();
                s / total_weight
            }
            EstimatorKind::Wdr => {
                let h = weights.horizon;
                let mut cache = WdrCache {
                    w_t: vec![0.0; h],
                    w_prev: vec![0.0; h],
                    a: vec![0.0; h],
                    b: vec![0.0; h],
                    c: vec![0.0; h],
                };
                for t in 0..h {
                    let (mut wt, mut wp, mut sa, mut sb, mut sc) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for k in 0..n {
                        let w = weights.w[k][t];
                        let p = weights.prev_weight(k, t);
                        wt += w;
                        wp += p;
                        sa += w * weights.r[k][t];
                        sb += w * weights.q[k][t];
                        sc += p * weights.v[k][t];
                    }
                    cache.w_t[t] = wt;
                    cache.w_prev[t] = wp;
                    cache.a[t] = weighted_mean(sa, wt);
                    cache.b[t] = weighted_mean(sb, wt);
                    cache.c[t] = weighted_mean(sc, wp);
                }
                if h > 0 && cache.w_t[0] == 0.0 {
                    return Err(OpeError::AllWeightsZero);
                }
                let v = discounted(
                    weights.gamma,
                    (0..h).map(|t| cache.a[t] - cache.b[t] + cache.c[t]),
                );
                wdr = Some(cache);
                v
            }
            EstimatorKind::KernelFqe | EstimatorKind::LinearFqe => unreachable!(),
        };
        Ok(Self {
            weights,
            method,
            v_hat,
            contributions,
            total_weight,
            wdr,
        })
    }

    /// Change in `v_hat` when trajectory `n` is removed; `None` when the estimator is
    /// undefined without it.
    pub fn influence(&self, n: usize) -> Option<f64> {
        let count = self.weights.len();
        if count < 2 {
            return None;
        }
        match self.method {
            EstimatorKind::Is | EstimatorKind::Pdis | EstimatorKind::Dr => {
                Some((self.v_hat - self.contributions[n]) / (count - 1) as f64)
            }
            EstimatorKind::Wis => {
                let w_j = self.weights.final_weight(n);
                let rest = self.total_weight - w_j;
                if rest == 0.0 {
                    return None;
                }
                Some(w_j / rest * (self.v_hat - self.weights.discounted_return(n)))
            }
            EstimatorKind::Wdr => {
                let cache = self.wdr.as_ref().expect("wdr cache");
                let h = self.weights.horizon;
                if h > 0 && cache.w_t[0] - self.weights.w[n][0] == 0.0 {
                    return None;
                }
                let terms = (0..h).map(|t| {
                    let w = self.weights.w[n][t];
                    let p = self.weights.prev_weight(n, t);
                    shift(w, cache.w_t[t], cache.a[t], self.weights.r[n][t])
                        - shift(w, cache.w_t[t], cache.b[t], self.weights.q[n][t])
                        + shift(p, cache.w_prev[t], cache.c[t], self.weights.v[n][t])
                });
                Some(discounted(self.weights.gamma, terms))
            }
            EstimatorKind::KernelFqe | EstimatorKind::LinearFqe => unreachable!(),
        }
    }
}

/// Change of a normalized mean `A = sum w x / W` when one member with weight `w`
/// and value `x` is removed.
fn shift(w: f64, total: f64, mean: f64, x: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else if total - w == 0.0 {
        -mean
    } else {
        w / (total - w) * (mean - x)
    }
}

/// Influence report over all trajectories.
pub fn is_influence_report(
    config: &AnalysisConfig,
    weights: &TrajectoryWeights,
) -> Result<InfluenceReport> {
    let prepared = PreparedIs::new(weights, config.estimator)?;
    let raw = weights
        .ids
        .iter()
        .enumerate()
        .map(|(n, id)| {
            let r = match prepared.influence(n) {
                Some(v) => RawInfluence::Value(v),
                None => RawInfluence::Undefined,
            };
            (id.clone(), r)
        })
        .collect();
    Ok(InfluenceReport::build(
        UnitKind::Trajectory,
        config.estimator,
        prepared.v_hat,
        config.influence_threshold,
        config.v_max,
        raw,
    ))
}
