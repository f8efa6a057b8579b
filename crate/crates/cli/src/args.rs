use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use opeinf_core::domains::TumorCase;
use opeinf_core::EstimatorKind;

#[derive(Debug, Parser)]
#[command(
    name = "opeinf",
    version,
    about = "Off-policy evaluation with exact influence analysis"
)]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset.
    Generate(GenerateArgs),
    /// Estimate, compute influences and diagnose a dataset.
    ///
    /// Exit code 0 = reliable, 2 = needs expert review, 3 = unevaluatable,
    /// 1 = error.
    Analyze(AnalyzeArgs),
    /// Compare closed-form influences with brute-force removal.
    Validate(ValidateArgs),
    /// Regenerate the figure data (fig2, cases, fig4).
    Reproduce(ReproduceArgs),
    /// Start the review service on a dataset.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Collapse {
    Syntactic,
    Semantic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelfRemovalArg {
    Shrink,
    Fixed,
}

/// Everything that determines an analysis apart from the data.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AnalysisArgs {
    #[arg(long, default_value = "kernel-fqe")]
    pub estimator: EstimatorKind,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Neighborhood radius (kernel FQE, kernel baselines).
    #[arg(long, default_value_t = 0.5)]
    pub radius: f64,
    /// FQE iterations; defaults to the longest trajectory.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Normalized influence above which a unit is flagged.
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,
    /// Upper bound on |value|; enables skipping units that cannot be influential.
    #[arg(long)]
    pub vmax: Option<f64>,
    /// Evaluation policy: `const:A`, `threshold:DIM:T:BELOW:ABOVE` or `tumor`.
    #[arg(long, default_value = "const:0")]
    pub policy: String,
    /// Comma-separated per-dimension distance weights (default all ones).
    #[arg(long)]
    pub metric_weights: Option<String>,
    /// Linear FQE features: `state-onehot` or `poly2`.
    #[arg(long)]
    pub features: Option<String>,
    /// Doubly robust baselines: `zero` or `kernel` (kernel FQE fitted on the same data).
    #[arg(long, default_value = "zero")]
    pub baseline: String,
    /// Accept gaps in step indices (edited or sparsified data).
    #[arg(long)]
    pub allow_gaps: bool,
    #[arg(long, value_enum, default_value = "syntactic")]
    pub collapse: Collapse,
    #[arg(long, value_enum, default_value = "shrink")]
    pub self_removal: SelfRemovalArg,
    /// Ridge term for linear FQE.
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub dataset: PathBuf,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    /// Output directory for the report files and manifest.
    #[arg(long, default_value = "opeinf-out")]
    pub out: PathBuf,
    /// After writing the reports, serve the review service on this port.
    #[arg(long)]
    pub serve: Option<u16>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub dataset: PathBuf,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    /// Maximum number of refits; later units are left out of the table.
    #[arg(long)]
    pub oracle_budget: Option<usize>,
    /// Write validation.json and validation.csv here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    pub dataset: PathBuf,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    #[arg(long, default_value_t = 8000)]
    pub port: u16,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Domain {
    Navigation,
    Tumor,
    Chain3,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CaseArg {
    Reliable,
    DeadEnd,
    Influential,
    Outliers,
}

impl From<CaseArg> for TumorCase {
    fn from(c: CaseArg) -> Self {
        match c {
            CaseArg::Reliable => TumorCase::Reliable,
            CaseArg::DeadEnd => TumorCase::DeadEnd,
            CaseArg::Influential => TumorCase::Influential,
            CaseArg::Outliers => TumorCase::Outliers,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(value_enum)]
    pub domain: Domain,
    /// Dataset path (JSON lines). Sidecar files are written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    /// Steps per trajectory.
    #[arg(long)]
    pub length: Option<usize>,
    /// Tumor: start from one of the reviewed configurations.
    #[arg(long, value_enum)]
    pub case: Option<CaseArg>,
    /// Tumor: exploration rate of the behavior policy.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Tumor: growth noise scale (implies stochastic dynamics when positive).
    #[arg(long)]
    pub noise: Option<f64>,
    /// Chain3: leave the last step non-terminal.
    #[arg(long)]
    pub open: bool,
    /// Chain3: number of identical copies.
    #[arg(long, default_value_t = 1)]
    pub copies: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Fig2,
    Cases,
    Fig4,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub figure: Figure,
    #[arg(long, default_value = "opeinf-out")]
    pub out: PathBuf,
    /// fig2: number of navigation seeds.
    #[arg(long, default_value_t = 200)]
    pub seeds: usize,
}
