use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use opeinf_core::{AnalysisConfig, Dataset, EstimatorKind, Outcome};

use crate::args::AnalysisArgs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub path: PathBuf,
    pub fingerprint: String,
    pub transitions: usize,
    pub trajectories: usize,
}

impl DatasetInfo {
    pub fn new(path: &Path, ds: &Dataset) -> Self {
        Self {
            path: path.to_path_buf(),
            fingerprint: ds.fingerprint(),
            transitions: ds.len(),
            trajectories: ds.trajectories().len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: PathBuf,
    pub sha256: String,
}

/// What a run read, how it was configured and what it wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Command-line settings as given.
    pub args: Option<AnalysisArgs>,
    /// Resolved configuration (horizon filled in for kernel FQE).
    pub config: Option<AnalysisConfig>,
    pub estimator: Option<EstimatorKind>,
    pub dataset: Option<DatasetInfo>,
    pub outcome: Option<Outcome>,
    pub outputs: Vec<OutputFile>,
    pub versions: BTreeMap<String, String>,
    pub elapsed_ms: f64,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        let versions = [
            ("opeinf-cli", env!("CARGO_PKG_VERSION")),
            ("opeinf-core", opeinf_core::VERSION),
            ("opeinf-review", opeinf_review::VERSION),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        Self {
            command: command.to_string(),
            args: None,
            config: None,
            estimator: None,
            dataset: None,
            outcome: None,
            outputs: Vec::new(),
            versions,
            elapsed_ms: 0.0,
        }
    }

    /// Writes `contents` to `dir/name` and records its hash.
    pub fn write(&mut self, dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(OutputFile {
            path: path.clone(),
            sha256: hex::encode(Sha256::digest(contents)),
        });
        Ok(path)
    }

    pub fn save(&self, dir: &Path, name: &str) -> Result<PathBuf> {
        let path = dir.join(name);
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
