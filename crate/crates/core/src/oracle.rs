//! Brute-force leave-one-out: refit without a unit and difference the estimates.
//! Uses only [`EvaluationSetup::estimate_value`]; no influence formula lives here.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{OpeError, Result};
use crate::pipeline::EvaluationSetup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleStatus {
    Ok,
    UndefinedAfterRemoval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub unit_id: String,
    pub v_hat_full: f64,
    pub v_hat_without: Option<f64>,
    pub influence: Option<f64>,
    pub status: OracleStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleBatch {
    pub results: Vec<OracleResult>,
    /// Set when the refit budget stopped the run before every unit was covered.
    pub truncated: bool,
    pub total_units: usize,
}

/// Removable units for the configured estimator: transitions for FQE, whole
/// trajectories for importance sampling.
pub fn units(setup: &EvaluationSetup, dataset: &Dataset) -> Vec<String> {
    if setup.config.estimator.is_trajectory_based() {
        dataset.trajectories().keys().cloned().collect()
    } else {
        dataset.transitions().iter().map(|t| t.id.clone()).collect()
    }
}

fn remove(setup: &EvaluationSetup, dataset: &Dataset, unit: &str) -> Result<Dataset> {
    if setup.config.estimator.is_trajectory_based() {
        dataset.without_trajectory(unit)
    } else {
        dataset.without_transition(unit)
    }
}

fn is_undefined(err: &OpeError) -> bool {
    matches!(
        err,
        OpeError::PolicyNotRepresented
            | OpeError::AllWeightsZero
            | OpeError::EmptyDataset
            | OpeError::Unidentifiable { .. }
            | OpeError::TooFewTrajectories { .. }
    )
}

fn refit(
    pinned: &EvaluationSetup,
    dataset: &Dataset,
    v_full: f64,
    unit: &str,
) -> Result<OracleResult> {
    let without = match remove(pinned, dataset, unit) {
        Ok(d) => pinned.estimate_value(&d),
        Err(e) => Err(e),
    };
    match without {
        Ok(v) => Ok(OracleResult {
            unit_id: unit.to_string(),
            v_hat_full: v_full,
            v_hat_without: Some(v),
            influence: Some(v - v_full),
            status: OracleStatus::Ok,
        }),
        Err(e) if is_undefined(&e) => Ok(OracleResult {
            unit_id: unit.to_string(),
            v_hat_full: v_full,
            v_hat_without: None,
            influence: None,
            status: OracleStatus::UndefinedAfterRemoval,
        }),
        Err(e) => Err(e),
    }
}

/// `I_j = v_hat(D without j) - v_hat(D)` for one unit.
pub fn brute_force_influence(
    setup: &EvaluationSetup,
    dataset: &Dataset,
    unit: &str,
) -> Result<OracleResult> {
    if !units(setup, dataset).iter().any(|u| u == unit) {
        return Err(OpeError::UnknownUnit(unit.to_string()));
    }
    let pinned = setup.pinned_to(dataset);
    let v_full = pinned.estimate_value(dataset)?;
    refit(&pinned, dataset, v_full, unit)
}

/// Refits for every unit, at most `budget` of them.
pub fn brute_force_all(
    setup: &EvaluationSetup,
    dataset: &Dataset,
    budget: Option<usize>,
) -> Result<OracleBatch> {
    let pinned = setup.pinned_to(dataset);
    let v_full = pinned.estimate_value(dataset)?;
    let all = units(setup, dataset);
    let take = budget.unwrap_or(all.len()).min(all.len());
    let results = all[..take]
        .par_iter()
        .map(|u| refit(&pinned, dataset, v_full, u))
        .collect::<Result<Vec<_>>>()?;
    Ok(OracleBatch {
        results,
        truncated: take < all.len(),
        total_units: all.len(),
    })
}
