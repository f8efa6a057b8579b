//! Transitions, datasets, and the line-delimited JSON dataset format.
//!
//! Each line of a dataset file is one JSON object with the fields
//! `id`, `trajectory_id`, `step_index`, `state`, `action`, `reward`,
//! `next_state`, `behavior_prob` (optional), `is_initial` and `is_terminal`.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{OpeError, Result};
use crate::policy::EvaluationPolicy;

/// One observed step `(x, a, r, x')`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    pub id: String,
    pub trajectory_id: String,
    pub step_index: usize,
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub behavior_prob: Option<f64>,
    pub is_initial: bool,
    pub is_terminal: bool,
}

/// How strictly step indices inside a trajectory are checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepValidation {
    /// Step indices are exactly `0, 1, .., len - 1`.
    #[default]
    Consecutive,
    /// Step indices are strictly increasing; gaps are allowed. Datasets produced by
    /// removing transitions (leave-one-out refits, expert edits, sparsified
    /// generators) use this mode.
    AllowGaps,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    transitions: Vec<Transition>,
    index: HashMap<String, usize>,
    trajectories: IndexMap<String, Vec<usize>>,
    state_dim: usize,
    action_count: usize,
    validation: StepValidation,
}

impl Dataset {
    pub fn new(transitions: Vec<Transition>) -> Result<Self> {
        Self::with_validation(transitions, StepValidation::Consecutive)
    }

    pub fn with_validation(
        transitions: Vec<Transition>,
        validation: StepValidation,
    ) -> Result<Self> {
        let first = transitions.first().ok_or(OpeError::EmptyDataset)?;
        let state_dim = first.state.len();
        let mut index = HashMap::with_capacity(transitions.len());
        let mut trajectories: IndexMap<String, Vec<usize>> = IndexMap::new();
        let mut action_count = 0;

        for (n, t) in transitions.iter().enumerate() {
            check_record(t, state_dim, None)?;
            if index.insert(t.id.clone(), n).is_some() {
                return Err(OpeError::DuplicateId {
                    line: None,
                    id: t.id.clone(),
                });
            }
            trajectories
                .entry(t.trajectory_id.clone())
                .or_default()
                .push(n);
            action_count = action_count.max(t.action + 1);
        }

        for (traj, members) in trajectories.iter_mut() {
            members.sort_by_key(|&n| transitions[n].step_index);
            for (pos, &n) in members.iter().enumerate() {
                let t = &transitions[n];
                let fail = |message: String| OpeError::StepOrder {
                    trajectory: traj.clone(),
                    id: t.id.clone(),
                    message,
                };
                match validation {
                    StepValidation::Consecutive if t.step_index != pos => {
                        return Err(fail(format!(
                            "step_index {} where {} was expected",
                            t.step_index, pos
                        )));
                    }
                    StepValidation::AllowGaps
                        if pos > 0 && transitions[members[pos - 1]].step_index == t.step_index =>
                    {
                        return Err(fail(format!("repeated step_index {}", t.step_index)));
                    }
                    _ => {}
                }
                if t.is_initial != (t.step_index == 0) {
                    return Err(fail(
                        "is_initial must be set exactly on the step_index-0 transition".into(),
                    ));
                }
            }
        }

        Ok(Self {
            transitions,
            index,
            trajectories,
            state_dim,
            action_count,
            validation,
        })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn get(&self, n: usize) -> &Transition {
        &self.transitions[n]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn by_id(&self, id: &str) -> Option<&Transition> {
        self.position(id).map(|n| &self.transitions[n])
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn validation(&self) -> StepValidation {
        self.validation
    }

    /// Trajectory id → transition positions ordered by `step_index`.
    pub fn trajectories(&self) -> &IndexMap<String, Vec<usize>> {
        &self.trajectories
    }

    pub fn trajectory(&self, id: &str) -> Option<&[usize]> {
        self.trajectories.get(id).map(Vec::as_slice)
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.reward).collect()
    }

    /// Number of transitions in the longest trajectory.
    pub fn longest_trajectory(&self) -> usize {
        self.trajectories.values().map(Vec::len).max().unwrap_or(0)
    }

    /// Positions of `D0`, the transitions flagged as initial.
    pub fn initial_positions(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&n| self.transitions[n].is_initial)
            .collect()
    }

    /// Copy of the dataset without one transition. Gaps in step indices are allowed
    /// in the result.
    pub fn without_transition(&self, id: &str) -> Result<Self> {
        let pos = self
            .position(id)
            .ok_or_else(|| OpeError::UnknownUnit(id.to_string()))?;
        let remaining: Vec<Transition> = self
            .transitions
            .iter()
            .enumerate()
            .filter(|&(n, _)| n != pos)
            .map(|(_, t)| t.clone())
            .collect();
        Self::with_validation(remaining, StepValidation::AllowGaps)
    }

    /// Copy of the dataset without a whole trajectory.
    pub fn without_trajectory(&self, trajectory_id: &str) -> Result<Self> {
        if !self.trajectories.contains_key(trajectory_id) {
            return Err(OpeError::UnknownUnit(trajectory_id.to_string()));
        }
        let remaining: Vec<Transition> = self
            .transitions
            .iter()
            .filter(|t| t.trajectory_id != trajectory_id)
            .cloned()
            .collect();
        Self::with_validation(remaining, self.validation)
    }

    pub fn into_transitions(self) -> Vec<Transition> {
        self.transitions
    }

    /// Serialized form: one JSON object per line, in dataset order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.transitions {
            out.push_str(&serde_json::to_string(t).expect("transition serializes"));
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the serialized dataset, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }
}

fn check_record(t: &Transition, state_dim: usize, line: Option<usize>) -> Result<()> {
    for (found, _) in [(t.state.len(), "state"), (t.next_state.len(), "next_state")] {
        if found != state_dim {
            return Err(OpeError::DimensionMismatch {
                line,
                id: t.id.clone(),
                expected: state_dim,
                found,
            });
        }
    }
    if !t.reward.is_finite() {
        return Err(OpeError::NonFinite {
            id: t.id.clone(),
            field: "reward",
        });
    }
    if t.state.iter().any(|v| !v.is_finite()) {
        return Err(OpeError::NonFinite {
            id: t.id.clone(),
            field: "state",
        });
    }
    if t.next_state.iter().any(|v| !v.is_finite()) {
        return Err(OpeError::NonFinite {
            id: t.id.clone(),
            field: "next_state",
        });
    }
    if let Some(p) = t.behavior_prob {
        if !(p > 0.0 && p <= 1.0) {
            return Err(OpeError::InvalidBehaviorProb {
                id: t.id.clone(),
                value: p,
            });
        }
    }
    Ok(())
}

pub fn parse_dataset(text: &str, validation: StepValidation) -> Result<Dataset> {
    parse_lines(text.as_bytes(), validation)
}

fn parse_lines<R: BufRead>(reader: R, validation: StepValidation) -> Result<Dataset> {
    let mut transitions = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut state_dim = None;
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| OpeError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Transition = serde_json::from_str(&line).map_err(|e| OpeError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let dim = *state_dim.get_or_insert(t.state.len());
        check_record(&t, dim, Some(line_no))?;
        if seen.insert(t.id.clone(), line_no).is_some() {
            return Err(OpeError::DuplicateId {
                line: Some(line_no),
                id: t.id,
            });
        }
        transitions.push(t);
    }
    Dataset::with_validation(transitions, validation)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    load_dataset_with(path, StepValidation::Consecutive)
}

pub fn load_dataset_with(path: impl AsRef<Path>, validation: StepValidation) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| OpeError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_lines(BufReader::new(file), validation)
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |source| OpeError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = fs::File::create(path).map_err(io)?;
    file.write_all(dataset.to_jsonl().as_bytes()).map_err(io)
}

/// `D0*`: initial transitions whose logged action is the evaluation policy's action.
pub fn initial_eval_set(dataset: &Dataset, policy: &dyn EvaluationPolicy) -> Vec<usize> {
    dataset
        .transitions()
        .iter()
        .enumerate()
        .filter(|(_, t)| t.is_initial && policy.action(&t.state) == t.action)
        .map(|(n, _)| n)
        .collect()
}
