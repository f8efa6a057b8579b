use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{OpeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    KernelFqe,
    LinearFqe,
    Is,
    Wis,
    Pdis,
    Dr,
    Wdr,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 7] = [
        EstimatorKind::KernelFqe,
        EstimatorKind::LinearFqe,
        EstimatorKind::Is,
        EstimatorKind::Wis,
        EstimatorKind::Pdis,
        EstimatorKind::Dr,
        EstimatorKind::Wdr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::KernelFqe => "kernel-fqe",
            EstimatorKind::LinearFqe => "linear-fqe",
            EstimatorKind::Is => "is",
            EstimatorKind::Wis => "wis",
            EstimatorKind::Pdis => "pdis",
            EstimatorKind::Dr => "dr",
            EstimatorKind::Wdr => "wdr",
        }
    }

    /// Importance-sampling estimators work on whole trajectories.
    pub fn is_trajectory_based(self) -> bool {
        !matches!(self, EstimatorKind::KernelFqe | EstimatorKind::LinearFqe)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = OpeError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| OpeError::InvalidConfig(format!("unknown estimator `{s}`")))
    }
}

/// How removal of an initial transition is treated in the total influence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelfRemoval {
    /// The initial set shrinks with the removed transition, exactly as a refit on
    /// the reduced dataset would.
    #[default]
    ShrinkInitialSet,
    /// Average individual influences over the full initial set (skipping `i = j`).
    FixedInitialSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub gamma: f64,
    pub radius: f64,
    /// FQE iteration count; `None` means the longest trajectory length.
    pub horizon: Option<usize>,
    pub influence_threshold: f64,
    pub v_max: Option<f64>,
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub self_removal: SelfRemoval,
    /// Ridge term added to the linear FQE system. Zero reproduces the plain
    /// least-squares solution.
    #[serde(default)]
    pub ridge: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            radius: 0.5,
            horizon: None,
            influence_threshold: 0.05,
            v_max: None,
            estimator: EstimatorKind::KernelFqe,
            self_removal: SelfRemoval::default(),
            ridge: 0.0,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(OpeError::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return bad(format!("radius must be positive, got {}", self.radius));
        }
        if self.horizon == Some(0) {
            return bad("horizon must be at least 1".into());
        }
        if self.influence_threshold.is_nan() || self.influence_threshold <= 0.0 {
            return bad(format!(
                "influence threshold must be positive, got {}",
                self.influence_threshold
            ));
        }
        if let Some(v) = self.v_max {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("v_max must be positive, got {v}"));
            }
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return bad(format!("ridge must be nonnegative, got {}", self.ridge));
        }
        Ok(())
    }
}
