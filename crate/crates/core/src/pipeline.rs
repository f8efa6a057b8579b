//! End-to-end evaluation: estimate, influence report, diagnosis.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::{AnalysisConfig, EstimatorKind};
use crate::data::{initial_eval_set, Dataset};
use crate::diagnostics::{diagnose, CollapseMode, Diagnosis};
use crate::error::Result;
use crate::importance::{
    compute_weights, is_influence_report, KernelBaselines, ValueBaselines, ZeroBaselines,
};
use crate::kernel::{
    build_neighbor_graph, influence_report, resolve_horizon, run_kernel_fqe, KernelInfluence,
};
use crate::linear::{fit_linear_fqe, linear_influence_report, FeatureMap};
use crate::metric::StateActionMetric;
use crate::policy::EvaluationPolicy;
use crate::report::InfluenceReport;

/// Everything besides the data that determines an analysis.
#[derive(Clone)]
pub struct EvaluationSetup {
    pub config: AnalysisConfig,
    pub policy: Arc<dyn EvaluationPolicy>,
    pub metric: StateActionMetric,
    /// Linear FQE features; defaults to state plus action one-hot.
    pub features: Option<FeatureMap>,
    pub baselines: Arc<dyn ValueBaselines>,
    pub collapse: CollapseMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub estimator: EstimatorKind,
    pub v_hat: f64,
    /// FQE iteration count actually used (kernel FQE only).
    pub horizon: Option<usize>,
    pub report: InfluenceReport,
    pub diagnosis: Diagnosis,
}

impl EvaluationSetup {
    pub fn new(
        config: AnalysisConfig,
        policy: Arc<dyn EvaluationPolicy>,
        metric: StateActionMetric,
    ) -> Self {
        Self {
            config,
            policy,
            metric,
            features: None,
            baselines: Arc::new(ZeroBaselines),
            collapse: CollapseMode::default(),
        }
    }

    pub fn with_features(mut self, features: FeatureMap) -> Self {
        self.features = Some(features);
        self
    }

    pub fn with_baselines(mut self, baselines: Arc<dyn ValueBaselines>) -> Self {
        self.baselines = baselines;
        self
    }

    pub fn with_collapse(mut self, collapse: CollapseMode) -> Self {
        self.collapse = collapse;
        self
    }

    /// Pins every data-dependent default (horizon, feature dimension) to the values
    /// implied by `dataset`, so that later runs on subsets of it are comparable.
    pub fn pinned_to(&self, dataset: &Dataset) -> Self {
        let mut out = self.clone();
        if out.config.horizon.is_none() && self.config.estimator == EstimatorKind::KernelFqe {
            out.config.horizon = Some(resolve_horizon(None, dataset));
        }
        if out.features.is_none() && self.config.estimator == EstimatorKind::LinearFqe {
            out.features = Some(FeatureMap::StateOneHot {
                actions: dataset.action_count(),
            });
        }
        out
    }

    fn features_for(&self, dataset: &Dataset) -> FeatureMap {
        self.features.clone().unwrap_or(FeatureMap::StateOneHot {
            actions: dataset.action_count(),
        })
    }

    /// The configured estimator's value on `dataset`, with no influence work.
    pub fn estimate_value(&self, dataset: &Dataset) -> Result<f64> {
        let cfg = &self.config;
        cfg.validate()?;
        match cfg.estimator {
            EstimatorKind::KernelFqe => {
                let horizon = resolve_horizon(cfg.horizon, dataset);
                let graph =
                    build_neighbor_graph(dataset, &self.metric, self.policy.as_ref(), cfg.radius)?;
                let d0 = initial_eval_set(dataset, self.policy.as_ref());
                Ok(run_kernel_fqe(&graph, &dataset.rewards(), &d0, cfg.gamma, horizon)?.v_hat)
            }
            EstimatorKind::LinearFqe => Ok(fit_linear_fqe(
                dataset,
                &self.features_for(dataset),
                self.policy.as_ref(),
                cfg.gamma,
                cfg.ridge,
            )?
            .v_hat),
            method => compute_weights(
                dataset,
                self.policy.as_ref(),
                cfg.gamma,
                self.baselines.as_ref(),
            )?
            .estimate(method),
        }
    }

    /// Estimate, closed-form influence report, and diagnosis.
    pub fn analyze(&self, dataset: &Dataset) -> Result<Analysis> {
        let cfg = &self.config;
        cfg.validate()?;
        let (report, horizon, graph) = match cfg.estimator {
            EstimatorKind::KernelFqe => {
                let horizon = resolve_horizon(cfg.horizon, dataset);
                let graph =
                    build_neighbor_graph(dataset, &self.metric, self.policy.as_ref(), cfg.radius)?;
                let d0 = initial_eval_set(dataset, self.policy.as_ref());
                let rewards = dataset.rewards();
                let fqe = run_kernel_fqe(&graph, &rewards, &d0, cfg.gamma, horizon)?;
                let inf = KernelInfluence::compute(&graph, &fqe, &rewards, cfg.gamma);
                let report = influence_report(dataset, cfg, &graph, &fqe, &inf);
                (report, Some(horizon), Some(graph))
            }
            EstimatorKind::LinearFqe => {
                let model = fit_linear_fqe(
                    dataset,
                    &self.features_for(dataset),
                    self.policy.as_ref(),
                    cfg.gamma,
                    cfg.ridge,
                )?;
                (linear_influence_report(dataset, cfg, &model), None, None)
            }
            _ => {
                let weights = compute_weights(
                    dataset,
                    self.policy.as_ref(),
                    cfg.gamma,
                    self.baselines.as_ref(),
                )?;
                (is_influence_report(cfg, &weights)?, None, None)
            }
        };
        let diagnosis = diagnose(&report, dataset, graph.as_ref(), self.collapse);
        Ok(Analysis {
            estimator: cfg.estimator,
            v_hat: report.v_hat,
            horizon,
            report,
            diagnosis,
        })
    }
}

/// Kernel-FQE value estimates fitted on `dataset`, frozen for use as doubly robust
/// baselines.
pub fn kernel_baselines(setup: &EvaluationSetup, dataset: &Dataset) -> Result<KernelBaselines> {
    let cfg = &setup.config;
    let horizon = resolve_horizon(cfg.horizon, dataset);
    let graph = build_neighbor_graph(dataset, &setup.metric, setup.policy.as_ref(), cfg.radius)?;
    let d0 = initial_eval_set(dataset, setup.policy.as_ref());
    let rewards = dataset.rewards();
    let fqe = run_kernel_fqe(&graph, &rewards, &d0, cfg.gamma, horizon)?;
    let points = dataset
        .transitions()
        .iter()
        .enumerate()
        .map(|(j, t)| {
            (
                t.state.clone(),
                t.action,
                rewards[j] + cfg.gamma * fqe.q_hat_prime[j],
            )
        })
        .collect();
    Ok(KernelBaselines::new(
        points,
        setup.metric.clone(),
        cfg.radius,
        setup.policy.clone(),
    ))
}
