//! Closed-form influences against the brute-force oracle.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::config::EstimatorKind;
use crate::data::Dataset;
use crate::error::Result;
use crate::oracle::{brute_force_all, OracleStatus};
use crate::pipeline::EvaluationSetup;

pub const TOP_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub id: String,
    pub closed_form: Option<f64>,
    pub oracle: Option<f64>,
    pub abs_dev: Option<f64>,
    /// `|closed - oracle| / max(|oracle|, |v_hat|)`: deviation relative to the
    /// scale of the estimate, since the oracle itself differences two values of
    /// that size.
    pub rel_dev: Option<f64>,
    pub skipped: bool,
    /// Both sides agree on whether the influence is defined.
    pub status_agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub estimator: EstimatorKind,
    pub v_hat: f64,
    pub rows: Vec<ValidationRow>,
    pub max_abs_dev: f64,
    pub max_rel_dev: f64,
    /// min, 25%, median, 75%, max of the absolute deviations.
    pub abs_dev_quantiles: [f64; 5],
    pub top_k: usize,
    pub top_k_overlap: usize,
    /// Signs agree on every unit in both top-k sets.
    pub top_k_signs_agree: bool,
    pub status_mismatches: usize,
    pub truncated: bool,
}

fn quantiles(mut xs: Vec<f64>) -> [f64; 5] {
    if xs.is_empty() {
        return [0.0; 5];
    }
    xs.sort_by(f64::total_cmp);
    let at = |q: f64| xs[((xs.len() - 1) as f64 * q).round() as usize];
    [at(0.0), at(0.25), at(0.5), at(0.75), at(1.0)]
}

/// Top `k` ids by `|value|`, ties by id.
pub fn top_k(values: &[(String, f64)], k: usize) -> Vec<String> {
    let mut v: Vec<&(String, f64)> = values.iter().collect();
    v.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(&b.0)));
    v.into_iter().take(k).map(|(id, _)| id.clone()).collect()
}

pub fn validate(
    setup: &EvaluationSetup,
    dataset: &Dataset,
    budget: Option<usize>,
) -> Result<ValidationSummary> {
    let analysis = setup.pinned_to(dataset).analyze(dataset)?;
    let batch = brute_force_all(setup, dataset, budget)?;
    let v_hat = analysis.v_hat;
    let oracle: HashMap<&str, (OracleStatus, Option<f64>)> = batch
        .results
        .iter()
        .map(|r| (r.unit_id.as_str(), (r.status, r.influence)))
        .collect();
    let mut rows = Vec::new();
    for u in &analysis.report.units {
        let Some(&(status, o)) = oracle.get(u.id.as_str()) else {
            continue;
        };
        let c = u.influence;
        let (abs_dev, rel_dev) = match (c, o) {
            (Some(c), Some(o)) => {
                let d = (c - o).abs();
                let scale = o.abs().max(v_hat.abs());
                (Some(d), Some(if scale > 0.0 { d / scale } else { d }))
            }
            _ => (None, None),
        };
        let status_agrees = u.skipped || (c.is_some() == (status == OracleStatus::Ok));
        rows.push(ValidationRow {
            id: u.id.clone(),
            closed_form: c,
            oracle: o,
            abs_dev,
            rel_dev,
            skipped: u.skipped,
            status_agrees,
        });
    }
    let devs: Vec<f64> = rows.iter().filter_map(|r| r.abs_dev).collect();
    let rels: Vec<f64> = rows.iter().filter_map(|r| r.rel_dev).collect();
    let both: Vec<&ValidationRow> = rows.iter().filter(|r| r.abs_dev.is_some()).collect();
    let closed: Vec<(String, f64)> = both
        .iter()
        .map(|r| (r.id.clone(), r.closed_form.unwrap()))
        .collect();
    let brute: Vec<(String, f64)> = both
        .iter()
        .map(|r| (r.id.clone(), r.oracle.unwrap()))
        .collect();
    let top_c = top_k(&closed, TOP_K);
    let top_o = top_k(&brute, TOP_K);
    let set_o: HashSet<&String> = top_o.iter().collect();
    let overlap: Vec<&String> = top_c.iter().filter(|id| set_o.contains(id)).collect();
    let by_id: HashMap<&str, &&ValidationRow> = both.iter().map(|r| (r.id.as_str(), r)).collect();
    let top_k_signs_agree = overlap.iter().all(|id| {
        let r = by_id[id.as_str()];
        r.closed_form.unwrap().signum() == r.oracle.unwrap().signum()
    });
    Ok(ValidationSummary {
        estimator: setup.config.estimator,
        v_hat,
        max_abs_dev: devs.iter().copied().fold(0.0, f64::max),
        max_rel_dev: rels.iter().copied().fold(0.0, f64::max),
        abs_dev_quantiles: quantiles(devs),
        top_k: TOP_K.min(both.len()),
        top_k_overlap: overlap.len(),
        top_k_signs_agree,
        status_mismatches: rows.iter().filter(|r| !r.status_agrees).count(),
        truncated: batch.truncated,
        rows,
    })
}
