//! Flag triage: reliable / needs expert review / unevaluatable, and sequence
//! collapsing for presentation.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::kernel::NeighborGraph;
use crate::report::{InfluenceReport, UnitKind, UnitRecord};

/// Steps of trajectory context shown on each side of a presented transition.
pub const CONTEXT_STEPS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Reliable,
    NeedsExpertReview,
    Unevaluatable,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Reliable => 0,
            Outcome::NeedsExpertReview => 2,
            Outcome::Unevaluatable => 3,
        }
    }
}

/// How consecutive flagged transitions are grouped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollapseMode {
    /// Adjacent step indices in one trajectory.
    #[default]
    Syntactic,
    /// Adjacent step indices and the earlier step's next pair has the later step
    /// as a neighbor.
    Semantic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresentationEntry {
    pub presented: String,
    pub influence: Option<f64>,
    pub normalized_influence: Option<f64>,
    pub dead_end: bool,
    pub covered: Vec<String>,
    /// Transition ids within the context window, in step order (includes the
    /// presented transition). Empty for trajectory units.
    pub context: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub outcome: Outcome,
    pub unit_kind: UnitKind,
    /// Flagged unit ids, most influential first.
    pub flagged: Vec<String>,
    pub dead_ends: Vec<String>,
    pub presentation: Vec<PresentationEntry>,
}

fn tie_key<'a>(dataset: &'a Dataset, kind: UnitKind, id: &'a str) -> (&'a str, usize) {
    match kind {
        UnitKind::Transition => {
            let t = dataset.by_id(id).expect("flagged transition exists");
            (t.trajectory_id.as_str(), t.step_index)
        }
        UnitKind::Trajectory => (id, 0),
    }
}

fn order(dataset: &Dataset, kind: UnitKind, a: &UnitRecord, b: &UnitRecord) -> Ordering {
    let sa = a.score().unwrap_or(0.0);
    let sb = b.score().unwrap_or(0.0);
    sb.total_cmp(&sa)
        .then_with(|| tie_key(dataset, kind, &a.id).cmp(&tie_key(dataset, kind, &b.id)))
}

pub fn diagnose(
    report: &InfluenceReport,
    dataset: &Dataset,
    graph: Option<&NeighborGraph>,
    mode: CollapseMode,
) -> Diagnosis {
    let kind = report.unit_kind;
    let mut flagged: Vec<&UnitRecord> = report.flagged().collect();
    flagged.sort_by(|a, b| order(dataset, kind, a, b));
    let ids: Vec<String> = flagged.iter().map(|u| u.id.clone()).collect();
    let dead_ends: Vec<String> = flagged
        .iter()
        .filter(|u| u.dead_end)
        .map(|u| u.id.clone())
        .collect();
    let groups = collapse_sequences(&ids, dataset, kind, graph, mode);
    let by_id: HashMap<&str, &UnitRecord> = flagged.iter().map(|u| (u.id.as_str(), *u)).collect();
    let mut presentation: Vec<PresentationEntry> = groups
        .into_iter()
        .map(|(presented, covered)| {
            let u = by_id[presented.as_str()];
            let context = match kind {
                UnitKind::Transition => context_window(dataset, &presented, CONTEXT_STEPS),
                UnitKind::Trajectory => Vec::new(),
            };
            PresentationEntry {
                influence: u.influence,
                normalized_influence: u.normalized_influence,
                dead_end: u.dead_end,
                presented,
                covered,
                context,
            }
        })
        .collect();
    presentation.sort_by(|a, b| {
        order(
            dataset,
            kind,
            by_id[a.presented.as_str()],
            by_id[b.presented.as_str()],
        )
    });
    let outcome = if !dead_ends.is_empty() {
        Outcome::Unevaluatable
    } else if !ids.is_empty() {
        Outcome::NeedsExpertReview
    } else {
        Outcome::Reliable
    };
    Diagnosis {
        outcome,
        unit_kind: kind,
        flagged: ids,
        dead_ends,
        presentation,
    }
}

/// Groups flagged transitions into maximal consecutive runs per trajectory and
/// returns `(presented, covered)` pairs; the last step of each run is presented.
/// Trajectory units pass through unchanged.
pub fn collapse_sequences(
    flagged: &[String],
    dataset: &Dataset,
    kind: UnitKind,
    graph: Option<&NeighborGraph>,
    mode: CollapseMode,
) -> Vec<(String, Vec<String>)> {
    if kind == UnitKind::Trajectory {
        return flagged.iter().map(|id| (id.clone(), Vec::new())).collect();
    }
    let mut by_traj: Vec<(String, Vec<usize>)> = Vec::new();
    for id in flagged {
        let pos = dataset.position(id).expect("flagged transition exists");
        let traj = &dataset.get(pos).trajectory_id;
        match by_traj.iter_mut().find(|(t, _)| t == traj) {
            Some((_, members)) => members.push(pos),
            None => by_traj.push((traj.clone(), vec![pos])),
        }
    }
    let linked = |a: usize, b: usize| {
        let (ta, tb) = (dataset.get(a), dataset.get(b));
        if tb.step_index != ta.step_index + 1 {
            return false;
        }
        match (mode, graph) {
            (CollapseMode::Semantic, Some(g)) => g.m_prime().get(a, b) != 0.0,
            _ => true,
        }
    };
    let mut out = Vec::new();
    for (_, mut members) in by_traj {
        members.sort_by_key(|&p| dataset.get(p).step_index);
        let mut run: Vec<usize> = Vec::new();
        for p in members {
            if let Some(&last) = run.last() {
                if !linked(last, p) {
                    out.push(finish(dataset, &run));
                    run.clear();
                }
            }
            run.push(p);
        }
        if !run.is_empty() {
            out.push(finish(dataset, &run));
        }
    }
    out
}

fn finish(dataset: &Dataset, run: &[usize]) -> (String, Vec<String>) {
    let (last, rest) = run.split_last().expect("nonempty run");
    (
        dataset.get(*last).id.clone(),
        rest.iter().map(|&p| dataset.get(p).id.clone()).collect(),
    )
}

/// Ids of transitions in the same trajectory within `steps` step indices.
pub fn context_window(dataset: &Dataset, id: &str, steps: usize) -> Vec<String> {
    let Some(t) = dataset.by_id(id) else {
        return Vec::new();
    };
    let lo = t.step_index.saturating_sub(steps);
    let hi = t.step_index + steps;
    dataset
        .trajectory(&t.trajectory_id)
        .unwrap_or_default()
        .iter()
        .map(|&p| dataset.get(p))
        .filter(|s| s.step_index >= lo && s.step_index <= hi)
        .map(|s| s.id.clone())
        .collect()
}
