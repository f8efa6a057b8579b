//! Off-policy evaluation with exact leave-one-out influence analysis.
//!
//! The crate estimates the value of a deterministic evaluation policy from logged
//! transitions (kernel FQE, linear FQE and five importance-sampling estimators),
//! computes how much removing each transition or trajectory would change that
//! estimate, and triages the result into reliable / needs expert review /
//! unevaluatable.

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod config;
pub mod data;
pub mod diagnostics;
pub mod domains;
pub mod edit;
pub mod error;
pub mod fixtures;
pub mod importance;
pub mod kernel;
pub mod linear;
pub mod metric;
pub mod oracle;
pub mod pipeline;
pub mod policy;
pub mod report;
pub mod sparse;
pub mod validate;

pub use config::{AnalysisConfig, EstimatorKind, SelfRemoval};
pub use data::{initial_eval_set, load_dataset, save_dataset, Dataset, StepValidation, Transition};
pub use diagnostics::{diagnose, CollapseMode, Diagnosis, Outcome};
pub use edit::{apply_patches, FieldPatch};
pub use error::{OpeError, Result};
pub use metric::StateActionMetric;
pub use pipeline::{Analysis, EvaluationSetup};
pub use policy::EvaluationPolicy;
pub use report::{InfluenceReport, UnitKind, UnitRecord};
