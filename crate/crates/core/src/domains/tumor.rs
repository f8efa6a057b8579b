//! Tumor-growth surrogate with monthly chemotherapy decisions.
//!
//! State `[P, C, Q, m]`: tumor burden, drug concentration, cumulative toxicity
//! and the month counter the evaluation policy keys on. One step, with action
//! `a` in {0 = no chemo, 1 = chemo}:
//!
//! ```text
//! C' = decay_c * C + a
//! Q' = decay_q * Q + (1 - decay_q) * a
//! P' = P * exp(growth * (1 - P / capacity) - kill * C') * exp(noise * z)
//! m' = m + 1
//! r  = 1 - P' / capacity
//! ```
//!
//! with `z ~ N(0, 1)` in stochastic mode. The evaluation policy treats for the
//! first 15 months and then stops; the behavior policy is epsilon-greedy around
//! it (uniform random action with probability `epsilon`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{AnalysisConfig, EstimatorKind};
use crate::data::{Dataset, Transition};
use crate::edit::{apply_patches, FieldPatch};
use crate::error::{OpeError, Result};
use crate::metric::StateActionMetric;
use crate::pipeline::EvaluationSetup;
use crate::policy::{EvaluationPolicy, ThresholdPolicy};

pub const STATE_DIM: usize = 4;
pub const MONTH: usize = 3;
pub const TREATMENT_MONTHS: f64 = 15.0;

/// "Treat for 15 months, then discontinue."
pub fn evaluation_policy() -> ThresholdPolicy {
    ThresholdPolicy {
        dim: MONTH,
        threshold: TREATMENT_MONTHS,
        below: 1,
        above: 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TumorConfig {
    pub num_trajectories: usize,
    pub horizon: usize,
    pub epsilon: f64,
    pub stochastic: bool,
    /// Log-scale standard deviation of the tumor update in stochastic mode.
    pub noise: f64,
    pub initial_tumor: f64,
    pub growth: f64,
    pub kill: f64,
    pub capacity: f64,
    pub decay_c: f64,
    pub decay_q: f64,
    pub seed: u64,
}

impl Default for TumorConfig {
    fn default() -> Self {
        Self {
            num_trajectories: 200,
            horizon: 30,
            epsilon: 0.3,
            stochastic: false,
            noise: 0.0,
            initial_tumor: 0.5,
            growth: 0.1,
            kill: 0.12,
            capacity: 1.0,
            decay_c: 0.5,
            decay_q: 0.8,
            seed: 0,
        }
    }
}

impl TumorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(OpeError::InvalidConfig(format!(
                "epsilon {} outside [0, 1]",
                self.epsilon
            )));
        }
        if self.noise.is_nan() || self.noise < 0.0 {
            return Err(OpeError::InvalidConfig(
                "noise scale must be nonnegative".into(),
            ));
        }
        if [self.capacity, self.initial_tumor]
            .iter()
            .any(|v| v.is_nan() || *v <= 0.0)
        {
            return Err(OpeError::InvalidConfig(
                "capacity and initial tumor must be positive".into(),
            ));
        }
        if self.num_trajectories == 0 || self.horizon == 0 {
            return Err(OpeError::InvalidConfig("need at least one step".into()));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> Vec<f64> {
        vec![self.initial_tumor, 0.0, 0.0, 0.0]
    }

    /// Next state with the noise factor `exp(noise * z)` supplied by the caller.
    pub fn step(&self, x: &[f64], action: usize, z: f64) -> Vec<f64> {
        let a = action as f64;
        let c = self.decay_c * x[1] + a;
        let q = self.decay_q * x[2] + (1.0 - self.decay_q) * a;
        let p = x[0]
            * (self.growth * (1.0 - x[0] / self.capacity) - self.kill * c + self.noise * z).exp();
        vec![p, c, q, x[MONTH] + 1.0]
    }

    pub fn reward(&self, next: &[f64]) -> f64 {
        1.0 - next[0] / self.capacity
    }

    /// Probability that the behavior policy picks `action` in `x`.
    pub fn behavior_prob(&self, x: &[f64], action: usize) -> f64 {
        let greedy = evaluation_policy().action(x);
        if action == greedy {
            1.0 - self.epsilon / 2.0
        } else {
            self.epsilon / 2.0
        }
    }

    /// Standardized tumor residual of a transition: how many noise standard
    /// deviations the logged `P'` is from the deterministic prediction. `None`
    /// when the transition is inconsistent with the dynamics in any other
    /// channel (drug, toxicity, month, reward).
    pub fn residual(&self, t: &Transition) -> Option<f64> {
        let expect = self.step(&t.state, t.action, 0.0);
        let tol = 1e-9;
        let exact = (1..STATE_DIM).all(|d| (expect[d] - t.next_state[d]).abs() <= tol)
            && (self.reward(&t.next_state) - t.reward).abs() <= tol;
        if !exact || t.next_state[0].is_nan() || t.next_state[0] <= 0.0 {
            return None;
        }
        let log_dev = (t.next_state[0] / expect[0]).ln();
        if self.stochastic && self.noise > 0.0 {
            Some(log_dev / self.noise)
        } else if log_dev.abs() <= tol {
            Some(0.0)
        } else {
            Some(f64::INFINITY)
        }
    }

    /// Whether a transition could have come from the simulator: consistent
    /// channels and a tumor residual within four noise standard deviations.
    pub fn is_plausible(&self, t: &Transition) -> bool {
        self.residual(t).is_some_and(|z| z.abs() <= 4.0)
    }
}

pub fn generate_tumor(config: &TumorConfig) -> Result<Dataset> {
    config.validate()?;
    let policy = evaluation_policy();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut transitions = Vec::with_capacity(config.num_trajectories * config.horizon);
    for n in 0..config.num_trajectories {
        let mut x = config.initial_state();
        for t in 0..config.horizon {
            let explore: f64 = rng.random();
            let action = if explore < config.epsilon {
                rng.random_range(0..2)
            } else {
                policy.action(&x)
            };
            let z: f64 = if config.stochastic {
                StandardNormal.sample(&mut rng)
            } else {
                0.0
            };
            let next = config.step(&x, action, z);
            transitions.push(Transition {
                id: format!("p{n}m{t}"),
                trajectory_id: format!("p{n}"),
                step_index: t,
                state: x.clone(),
                action,
                reward: config.reward(&next),
                next_state: next.clone(),
                behavior_prob: Some(config.behavior_prob(&x, action)),
                is_initial: t == 0,
                is_terminal: t + 1 == config.horizon,
            });
            x = next;
        }
    }
    Dataset::new(transitions)
}

/// Distance used for kernel FQE on tumor data. Months are weighted so heavily
/// that different months are never neighbors.
pub fn metric() -> StateActionMetric {
    StateActionMetric::weighted(vec![100.0, 1.0, 25.0, 1.0e4]).expect("valid weights")
}

pub const RADIUS: f64 = 0.3;

pub fn analysis_config() -> AnalysisConfig {
    AnalysisConfig {
        radius: RADIUS,
        ..AnalysisConfig::default()
    }
}

/// Analysis of tumor data with `estimator` and the domain metric.
pub fn evaluation_setup(estimator: EstimatorKind) -> EvaluationSetup {
    EvaluationSetup::new(
        AnalysisConfig {
            estimator,
            ..analysis_config()
        },
        std::sync::Arc::new(evaluation_policy()),
        metric(),
    )
}

/// The four reviewed configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TumorCase {
    /// Plenty of deterministic data.
    Reliable,
    /// Too few trajectories; the evaluation policy's path runs out of support.
    DeadEnd,
    /// Stochastic dynamics; some real transitions carry a lot of weight.
    Influential,
    /// The reliable data with a few corrupted on-path transitions.
    Outliers,
}

impl TumorCase {
    pub const ALL: [TumorCase; 4] = [
        TumorCase::Reliable,
        TumorCase::DeadEnd,
        TumorCase::Influential,
        TumorCase::Outliers,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TumorCase::Reliable => "reliable",
            TumorCase::DeadEnd => "dead-end",
            TumorCase::Influential => "influential",
            TumorCase::Outliers => "outliers",
        }
    }

    pub fn config(self) -> TumorConfig {
        let base = TumorConfig::default();
        match self {
            TumorCase::Reliable | TumorCase::Outliers => TumorConfig { seed: 11, ..base },
            TumorCase::DeadEnd => TumorConfig {
                num_trajectories: 12,
                seed: 12,
                ..base
            },
            TumorCase::Influential => TumorConfig {
                num_trajectories: 40,
                stochastic: true,
                noise: 0.1,
                seed: 13,
                ..base
            },
        }
    }
}

/// Off-policy data for comparing importance-sampling estimators: a small
/// exploration rate keeps a useful share of trajectories with nonzero weight.
pub fn method_comparison_config() -> TumorConfig {
    TumorConfig {
        num_trajectories: 100,
        epsilon: 0.05,
        stochastic: true,
        noise: 0.1,
        seed: 14,
        ..TumorConfig::default()
    }
}

/// Months at which outliers are injected in the outlier case.
pub const OUTLIER_MONTHS: [usize; 3] = [6, 10, 14];
pub const OUTLIER_REWARD: f64 = -50.0;
pub const OUTLIER_TUMOR_FACTOR: f64 = 8.0;

pub struct TumorCaseData {
    pub case: TumorCase,
    pub config: TumorConfig,
    pub dataset: Dataset,
    /// Ids of corrupted transitions (outlier case only).
    pub injected: Vec<String>,
}

pub fn tumor_case(case: TumorCase) -> Result<TumorCaseData> {
    let config = case.config();
    let mut dataset = generate_tumor(&config)?;
    let mut injected = Vec::new();
    if case == TumorCase::Outliers {
        let (d, ids) = inject_outliers(
            &dataset,
            &OUTLIER_MONTHS,
            OUTLIER_REWARD,
            OUTLIER_TUMOR_FACTOR,
        )?;
        dataset = d;
        injected = ids;
    }
    Ok(TumorCaseData {
        case,
        config,
        dataset,
        injected,
    })
}

/// Trajectories that follow the evaluation policy through step `month`
/// inclusive, in dataset order.
pub fn on_policy_through(dataset: &Dataset, month: usize) -> Vec<String> {
    let policy = evaluation_policy();
    dataset
        .trajectories()
        .iter()
        .filter(|(_, steps)| {
            steps.len() > month
                && steps[..=month]
                    .iter()
                    .all(|&p| dataset.get(p).action == policy.action(&dataset.get(p).state))
        })
        .map(|(id, _)| id.clone())
        .collect()
}

/// Corrupts one on-policy transition per entry of `months`: the reward becomes
/// `reward`, the next tumor burden is multiplied by `tumor_factor`, the
/// transition becomes terminal and the rest of its trajectory is dropped.
/// Each outlier uses a different trajectory (the first unused one that is on
/// policy through that month). Returns the new dataset and the corrupted ids.
pub fn inject_outliers(
    dataset: &Dataset,
    months: &[usize],
    reward: f64,
    tumor_factor: f64,
) -> Result<(Dataset, Vec<String>)> {
    let mut used: Vec<String> = Vec::new();
    let mut targets = Vec::new();
    for &m in months {
        let traj = on_policy_through(dataset, m)
            .into_iter()
            .find(|t| !used.contains(t))
            .ok_or_else(|| {
                OpeError::InvalidConfig(format!("no unused on-policy trajectory reaches month {m}"))
            })?;
        used.push(traj.clone());
        targets.push((traj, m));
    }
    let mut ids = Vec::new();
    let mut out = Vec::with_capacity(dataset.len());
    for t in dataset.transitions() {
        match targets.iter().find(|(traj, _)| *traj == t.trajectory_id) {
            Some((_, m)) if t.step_index > *m => {}
            Some((_, m)) if t.step_index == *m => {
                let mut c = t.clone();
                c.reward = reward;
                c.next_state[0] *= tumor_factor;
                c.is_terminal = true;
                ids.push(c.id.clone());
                out.push(c);
            }
            _ => out.push(t.clone()),
        }
    }
    Ok((Dataset::with_validation(out, dataset.validation())?, ids))
}

/// Replaces the reward of transition `id` with `reward`; everything else is
/// untouched.
/// Reward spike used for the review-loop demonstration: month and value.
pub const SPIKE_MONTH: usize = 10;
pub const SPIKE_REWARD: f64 = -200.0;

/// The `SPIKE_MONTH` step of the first trajectory that follows the evaluation
/// policy that far.
pub fn spike_target(dataset: &Dataset) -> Option<String> {
    let traj = on_policy_through(dataset, SPIKE_MONTH).into_iter().next()?;
    let steps = dataset.trajectory(&traj)?;
    Some(dataset.get(steps[SPIKE_MONTH]).id.clone())
}

pub fn inject_reward_spike(dataset: &Dataset, id: &str, reward: f64) -> Result<Dataset> {
    if dataset.by_id(id).is_none() {
        return Err(OpeError::UnknownUnit(id.to_string()));
    }
    let patch = FieldPatch {
        target: None,
        field: "reward".into(),
        value: reward,
    };
    apply_patches(dataset, Some(id), &[patch])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_data_follows_the_policy() {
        let cfg = TumorConfig {
            epsilon: 0.0,
            num_trajectories: 3,
            ..TumorConfig::default()
        };
        let ds = generate_tumor(&cfg).unwrap();
        let pi = evaluation_policy();
        assert!(ds
            .transitions()
            .iter()
            .all(|t| t.action == pi.action(&t.state)));
        assert!(ds
            .transitions()
            .iter()
            .all(|t| t.behavior_prob == Some(1.0)));
        // identical trajectories
        let first: Vec<_> = ds.transitions()[..30]
            .iter()
            .map(|t| t.next_state.clone())
            .collect();
        let second: Vec<_> = ds.transitions()[30..60]
            .iter()
            .map(|t| t.next_state.clone())
            .collect();
        assert_eq!(first, second);
    }

    #[test]
    fn chemo_shrinks_and_stopping_regrows() {
        let cfg = TumorConfig::default();
        let mut x = cfg.initial_state();
        let mut path = vec![x[0]];
        for m in 0..30 {
            x = cfg.step(&x, usize::from(m < 15), 0.0);
            path.push(x[0]);
        }
        assert!(path[15] < path[0] / 4.0);
        assert!(path[30] > path[15] * 2.0);
    }

    #[test]
    fn simulated_transitions_are_plausible() {
        let cfg = TumorConfig {
            stochastic: true,
            noise: 0.05,
            num_trajectories: 20,
            ..TumorConfig::default()
        };
        let ds = generate_tumor(&cfg).unwrap();
        assert!(ds.transitions().iter().all(|t| cfg.is_plausible(t)));
        let (bad, ids) = inject_outliers(&ds, &[3], -20.0, 8.0).unwrap();
        assert!(!cfg.is_plausible(bad.by_id(&ids[0]).unwrap()));
    }

    #[test]
    fn outliers_truncate_their_trajectories() {
        let ds = generate_tumor(&TumorConfig::default()).unwrap();
        let (bad, ids) = inject_outliers(&ds, &[2, 5], -20.0, 8.0).unwrap();
        assert_eq!(ids.len(), 2);
        for id in &ids {
            let t = bad.by_id(id).unwrap();
            assert!(t.is_terminal);
            assert_eq!(
                bad.trajectory(&t.trajectory_id).unwrap().len(),
                t.step_index + 1
            );
        }
    }

    #[test]
    fn behavior_overlap_grows_as_epsilon_shrinks() {
        let frac = |eps: f64| {
            let ds = generate_tumor(&TumorConfig {
                epsilon: eps,
                num_trajectories: 50,
                ..TumorConfig::default()
            })
            .unwrap();
            let pi = evaluation_policy();
            ds.transitions()
                .iter()
                .filter(|t| t.action == pi.action(&t.state))
                .count() as f64
                / ds.len() as f64
        };
        assert!(frac(0.05) > frac(0.3));
        assert!(frac(0.3) > frac(0.9));
    }
}
