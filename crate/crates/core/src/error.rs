use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = OpeError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum OpeError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{}dimension mismatch in transition `{id}`: expected {expected}, found {found}", line_prefix(*.line))]
    DimensionMismatch {
        line: Option<usize>,
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("{}duplicate transition id `{id}`", line_prefix(*.line))]
    DuplicateId { line: Option<usize>, id: String },

    #[error("trajectory `{trajectory}`, transition `{id}`: {message}")]
    StepOrder {
        trajectory: String,
        id: String,
        message: String,
    },

    #[error("transition `{id}`: behavior_prob {value} is outside (0, 1]")]
    InvalidBehaviorProb { id: String, value: f64 },

    #[error("transition `{id}`: non-finite value in field `{field}`")]
    NonFinite { id: String, field: &'static str },

    #[error("dataset contains no transitions")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("policy not represented in initial data (no initial transition takes the evaluation action)")]
    PolicyNotRepresented,

    #[error("transition `{id}` has no behavior_prob, which importance sampling requires")]
    MissingBehaviorProb { id: String },

    #[error("all trajectory weights zero")]
    AllWeightsZero,

    #[error("{method} needs at least {needed} trajectories, found {found}")]
    TooFewTrajectories {
        method: &'static str,
        needed: usize,
        found: usize,
    },

    #[error("model unidentifiable: condition number {condition:.3e}; deficient directions {directions:?}")]
    Unidentifiable {
        condition: f64,
        directions: Vec<Vec<f64>>,
    },

    #[error("removal of `{id}` makes model unidentifiable")]
    RemovalUnidentifiable { id: String },

    #[error("unknown unit `{0}`")]
    UnknownUnit(String),

    #[error("invalid patch: {0}")]
    InvalidPatch(String),
}

fn line_prefix(line: Option<usize>) -> String {
    match line {
        Some(l) => format!("line {l}: "),
        None => String::new(),
    }
}
