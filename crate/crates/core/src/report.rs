//! Influence reports: one record per removable unit.

use serde::{Deserialize, Serialize};

use crate::config::EstimatorKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Transition,
    Trajectory,
}

/// How flags were decided. When `v_hat` is zero the normalized influence is
/// undefined and absolute influences are compared against `cutoff` instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlagBasis {
    Normalized { threshold: f64 },
    Absolute { cutoff: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub id: String,
    /// `None` when the estimator is undefined after removal or the unit was skipped.
    pub influence: Option<f64>,
    pub normalized_influence: Option<f64>,
    pub flagged: bool,
    pub dead_end: bool,
    pub skipped: bool,
}

impl UnitRecord {
    /// The quantity compared against the threshold.
    pub fn score(&self) -> Option<f64> {
        self.normalized_influence
            .or_else(|| self.influence.map(f64::abs))
    }

    pub fn is_undefined(&self) -> bool {
        self.influence.is_none() && !self.skipped
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceReport {
    pub unit_kind: UnitKind,
    pub estimator: EstimatorKind,
    pub v_hat: f64,
    pub basis: FlagBasis,
    pub units: Vec<UnitRecord>,
}

/// A unit's raw influence as produced by an estimator.
#[derive(Debug, Clone, PartialEq)]
pub enum RawInfluence {
    Value(f64),
    Undefined,
    Skipped,
}

impl InfluenceReport {
    /// Normalizes and flags raw influences. With `v_hat != 0` a unit is flagged when
    /// `|I_j| / |v_hat| > threshold`; otherwise when `|I_j| > threshold * v_max`
    /// (or `> threshold` without `v_max`).
    pub fn build(
        unit_kind: UnitKind,
        estimator: EstimatorKind,
        v_hat: f64,
        threshold: f64,
        v_max: Option<f64>,
        raw: Vec<(String, RawInfluence)>,
    ) -> Self {
        let basis = if v_hat != 0.0 {
            FlagBasis::Normalized { threshold }
        } else {
            FlagBasis::Absolute {
                cutoff: threshold * v_max.unwrap_or(1.0),
            }
        };
        let units = raw
            .into_iter()
            .map(|(id, r)| {
                let (influence, skipped) = match r {
                    RawInfluence::Value(v) => (Some(v), false),
                    RawInfluence::Undefined => (None, false),
                    RawInfluence::Skipped => (None, true),
                };
                let normalized_influence = match (influence, v_hat != 0.0) {
                    (Some(v), true) => Some(v.abs() / v_hat.abs()),
                    _ => None,
                };
                let flagged = match (basis, influence) {
                    (FlagBasis::Normalized { threshold }, Some(_)) => {
                        normalized_influence.unwrap() > threshold
                    }
                    (FlagBasis::Absolute { cutoff }, Some(v)) => v.abs() > cutoff,
                    _ => false,
                };
                UnitRecord {
                    id,
                    influence,
                    normalized_influence,
                    flagged,
                    dead_end: false,
                    skipped,
                }
            })
            .collect();
        Self {
            unit_kind,
            estimator,
            v_hat,
            basis,
            units,
        }
    }

    pub fn unit(&self, id: &str) -> Option<&UnitRecord> {
        self.units.iter().find(|u| u.id == id)
    }

    pub fn flagged(&self) -> impl Iterator<Item = &UnitRecord> {
        self.units.iter().filter(|u| u.flagged)
    }

    pub fn flagged_ids(&self) -> Vec<String> {
        self.flagged().map(|u| u.id.clone()).collect()
    }

    pub fn dead_end_ids(&self) -> Vec<String> {
        self.units
            .iter()
            .filter(|u| u.dead_end)
            .map(|u| u.id.clone())
            .collect()
    }

    pub fn skipped_ids(&self) -> Vec<String> {
        self.units
            .iter()
            .filter(|u| u.skipped)
            .map(|u| u.id.clone())
            .collect()
    }

    pub fn influence(&self, id: &str) -> Option<f64> {
        self.unit(id).and_then(|u| u.influence)
    }

    /// Line-delimited records, in unit order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for u in &self.units {
            out.push_str(&serde_json::to_string(u).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}
