//! Expert review of flagged transitions over HTTP: list flags with trajectory
//! context, take verdicts, apply removals and field corrections as new dataset
//! versions, and re-run the analysis on each.

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod http;
pub mod session;

pub use http::{router, serve, serve_on, AppState};
pub use session::{
    apply_verdict, replay, AuditEntry, Decision, FlagEntry, FlagList, ReviewError, ReviewSession,
    Status, TransitionView, Verdict, VerdictResponse, Version, VersionSummary,
};
