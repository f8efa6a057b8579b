//! Deterministic evaluation policies `x -> a`.

use std::collections::HashMap;

use crate::error::{OpeError, Result};
use crate::metric::StateActionMetric;

pub trait EvaluationPolicy: Send + Sync {
    fn action(&self, state: &[f64]) -> usize;

    fn describe(&self) -> String {
        "external".to_string()
    }
}

/// Always takes the same action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstantPolicy(pub usize);

impl EvaluationPolicy for ConstantPolicy {
    fn action(&self, _state: &[f64]) -> usize {
        self.0
    }

    fn describe(&self) -> String {
        format!("const:{}", self.0)
    }
}

/// Chooses `below` while `state[dim] < threshold` and `above` otherwise.
///
/// The tumor domain's "treat for 15 months, then stop" rule is
/// `ThresholdPolicy { dim: 3, threshold: 15.0, below: 1, above: 0 }`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPolicy {
    pub dim: usize,
    pub threshold: f64,
    pub below: usize,
    pub above: usize,
}

impl EvaluationPolicy for ThresholdPolicy {
    fn action(&self, state: &[f64]) -> usize {
        if state[self.dim] < self.threshold {
            self.below
        } else {
            self.above
        }
    }

    fn describe(&self) -> String {
        format!(
            "threshold:{}:{}:{}:{}",
            self.dim, self.threshold, self.below, self.above
        )
    }
}

/// Exact-match lookup keyed on the bit pattern of the state vector.
#[derive(Debug, Clone, Default)]
pub struct TablePolicy {
    table: HashMap<Vec<u64>, usize>,
    default: usize,
}

fn state_key(state: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 compare equal, so normalize before hashing bits.
    state.iter().map(|v| (v + 0.0).to_bits()).collect()
}

impl TablePolicy {
    pub fn new(entries: impl IntoIterator<Item = (Vec<f64>, usize)>, default: usize) -> Self {
        Self {
            table: entries
                .into_iter()
                .map(|(s, a)| (state_key(&s), a))
                .collect(),
            default,
        }
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl EvaluationPolicy for TablePolicy {
    fn action(&self, state: &[f64]) -> usize {
        self.table
            .get(&state_key(state))
            .copied()
            .unwrap_or(self.default)
    }

    fn describe(&self) -> String {
        format!("table[{}]", self.table.len())
    }
}

/// Most common action among the `k` nearest reference states. Ties go to the
/// smallest action id; distance ties go to the earlier reference point.
#[derive(Debug, Clone)]
pub struct NearestNeighborPolicy {
    states: Vec<Vec<f64>>,
    actions: Vec<usize>,
    k: usize,
    metric: StateActionMetric,
}

impl NearestNeighborPolicy {
    pub fn new(
        reference: Vec<(Vec<f64>, usize)>,
        k: usize,
        metric: StateActionMetric,
    ) -> Result<Self> {
        if k == 0 || reference.is_empty() {
            return Err(OpeError::InvalidConfig(
                "nearest-neighbor policy needs k >= 1 and a nonempty reference set".into(),
            ));
        }
        let (states, actions) = reference.into_iter().unzip();
        Ok(Self {
            states,
            actions,
            k,
            metric,
        })
    }
}

impl EvaluationPolicy for NearestNeighborPolicy {
    fn action(&self, state: &[f64]) -> usize {
        let mut order: Vec<(f64, usize)> = self
            .states
            .iter()
            .enumerate()
            .map(|(n, s)| (self.metric.state_distance_sq(state, s), n))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes: HashMap<usize, usize> = HashMap::new();
        for &(_, n) in order.iter().take(self.k) {
            *votes.entry(self.actions[n]).or_default() += 1;
        }
        votes
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(a, _)| a)
            .expect("k >= 1")
    }

    fn describe(&self) -> String {
        format!("knn:{}[{}]", self.k, self.states.len())
    }
}

/// Wraps an arbitrary deterministic function.
pub struct FnPolicy<F>(pub F);

impl<F> EvaluationPolicy for FnPolicy<F>
where
    F: Fn(&[f64]) -> usize + Send + Sync,
{
    fn action(&self, state: &[f64]) -> usize {
        (self.0)(state)
    }
}
