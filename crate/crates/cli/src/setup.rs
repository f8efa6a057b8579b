//! Turning command-line strings into an `EvaluationSetup`.

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};

use opeinf_core::data::load_dataset_with;
use opeinf_core::domains::tumor;
use opeinf_core::linear::FeatureMap;
use opeinf_core::pipeline::kernel_baselines;
use opeinf_core::policy::{ConstantPolicy, EvaluationPolicy, ThresholdPolicy};
use opeinf_core::{
    AnalysisConfig, CollapseMode, Dataset, EstimatorKind, EvaluationSetup, SelfRemoval,
    StateActionMetric, StepValidation,
};

use crate::args::{AnalysisArgs, Collapse, SelfRemovalArg};

pub fn parse_policy(spec: &str) -> Result<Arc<dyn EvaluationPolicy>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| {
        s.parse::<f64>()
            .with_context(|| format!("bad number `{s}` in policy `{spec}`"))
    };
    let int = |s: &str| {
        s.parse::<usize>()
            .with_context(|| format!("bad integer `{s}` in policy `{spec}`"))
    };
    Ok(match parts.as_slice() {
        ["const", a] => Arc::new(ConstantPolicy(int(a)?)),
        ["threshold", dim, t, below, above] => Arc::new(ThresholdPolicy {
            dim: int(dim)?,
            threshold: num(t)?,
            below: int(below)?,
            above: int(above)?,
        }),
        ["tumor"] => Arc::new(tumor::evaluation_policy()),
        _ => bail!(
            "unknown policy `{spec}` (expected const:A, threshold:DIM:T:BELOW:ABOVE or tumor)"
        ),
    })
}

pub fn parse_weights(spec: &str) -> Result<Vec<f64>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("bad metric weight `{s}`"))
        })
        .collect()
}

pub fn parse_features(spec: &str, dataset: &Dataset) -> Result<FeatureMap> {
    let actions = dataset.action_count();
    Ok(match spec {
        "state-onehot" => FeatureMap::StateOneHot { actions },
        "poly2" => FeatureMap::Poly2 { actions },
        _ => bail!("unknown feature map `{spec}` (expected state-onehot or poly2)"),
    })
}

pub fn config(a: &AnalysisArgs) -> AnalysisConfig {
    AnalysisConfig {
        gamma: a.gamma,
        radius: a.radius,
        horizon: a.horizon,
        influence_threshold: a.threshold,
        v_max: a.vmax,
        estimator: a.estimator,
        self_removal: match a.self_removal {
            SelfRemovalArg::Shrink => SelfRemoval::ShrinkInitialSet,
            SelfRemovalArg::Fixed => SelfRemoval::FixedInitialSet,
        },
        ridge: a.ridge,
    }
}

pub fn load(path: &Path, a: &AnalysisArgs) -> Result<Dataset> {
    let validation = if a.allow_gaps {
        StepValidation::AllowGaps
    } else {
        StepValidation::Consecutive
    };
    load_dataset_with(path, validation).with_context(|| format!("loading {}", path.display()))
}

pub fn build(a: &AnalysisArgs, dataset: &Dataset) -> Result<EvaluationSetup> {
    let config = config(a);
    config.validate()?;
    let metric = match &a.metric_weights {
        Some(w) => StateActionMetric::weighted(parse_weights(w)?)?,
        None => StateActionMetric::euclidean(dataset.state_dim()),
    };
    if metric.dim() != dataset.state_dim() {
        bail!(
            "{} metric weights given for {}-dimensional states",
            metric.dim(),
            dataset.state_dim()
        );
    }
    let collapse = match a.collapse {
        Collapse::Syntactic => CollapseMode::Syntactic,
        Collapse::Semantic => CollapseMode::Semantic,
    };
    let mut setup =
        EvaluationSetup::new(config, parse_policy(&a.policy)?, metric).with_collapse(collapse);
    if let Some(f) = &a.features {
        setup = setup.with_features(parse_features(f, dataset)?);
    }
    match a.baseline.as_str() {
        "zero" => {}
        "kernel" => {
            let mut fit = setup.clone();
            fit.config.estimator = EstimatorKind::KernelFqe;
            setup = setup.with_baselines(Arc::new(kernel_baselines(&fit, dataset)?));
        }
        other => bail!("unknown baseline `{other}` (expected zero or kernel)"),
    }
    Ok(setup)
}
