use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{OpeError, Result};
use crate::metric::StateActionMetric;
use crate::policy::EvaluationPolicy;
use crate::sparse::CsrMatrix;

/// Row-normalized neighbor matrices over `(x, a)` pairs (`M`) and from
/// `(x', pi_e(x'))` pairs to `(x, a)` pairs (`M'`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NeighborGraph {
    m: CsrMatrix,
    m_prime: CsrMatrix,
    counts: Vec<usize>,
    next_counts: Vec<usize>,
    /// For each `j`, every `k` whose next pair has `j` as a neighbor.
    dependents: Vec<Vec<usize>>,
}

impl NeighborGraph {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn m(&self) -> &CsrMatrix {
        &self.m
    }

    pub fn m_prime(&self) -> &CsrMatrix {
        &self.m_prime
    }

    /// `N_i`, always at least 1.
    pub fn count(&self, i: usize) -> usize {
        self.counts[i]
    }

    /// `N_{i'}`; zero for terminal transitions and dead ends.
    pub fn next_count(&self, i: usize) -> usize {
        self.next_counts[i]
    }

    /// `N*_{j'}`: how many next pairs have `j` as a neighbor.
    pub fn dependent_count(&self, j: usize) -> usize {
        self.dependents[j].len()
    }

    pub fn dependents(&self, j: usize) -> &[usize] {
        &self.dependents[j]
    }

    /// Indices `j` with `Delta_ij` (the support of row `i` of `M`). The relation is
    /// symmetric, so this is also the set of rows that contain `i`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.m.row(i).map(|(c, _)| c)
    }

    pub fn next_neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.m_prime.row(i).map(|(c, _)| c)
    }

    pub fn is_neighbor(&self, i: usize, j: usize) -> bool {
        self.m.get(i, j) != 0.0
    }

    fn from_lists(n: usize, m_lists: Vec<Vec<usize>>, mp_lists: Vec<Vec<usize>>) -> Self {
        let counts: Vec<usize> = m_lists.iter().map(Vec::len).collect();
        let next_counts: Vec<usize> = mp_lists.iter().map(Vec::len).collect();
        let mut dependents = vec![Vec::new(); n];
        for (k, row) in mp_lists.iter().enumerate() {
            for &j in row {
                dependents[j].push(k);
            }
        }
        let normalize = |lists: Vec<Vec<usize>>| {
            lists
                .into_iter()
                .map(|row| {
                    let w = 1.0 / row.len() as f64;
                    row.into_iter().map(|c| (c, w)).collect()
                })
                .collect()
        };
        Self {
            m: CsrMatrix::from_rows(n, normalize(m_lists)),
            m_prime: CsrMatrix::from_rows(n, normalize(mp_lists)),
            counts,
            next_counts,
            dependents,
        }
    }
}

fn spread(ts: &[crate::data::Transition], metric: &StateActionMetric, d: usize) -> f64 {
    let (lo, hi) = ts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
            (lo.min(t.state[d]), hi.max(t.state[d]))
        });
    if ts.is_empty() {
        0.0
    } else {
        (hi - lo) * metric.weights()[d].sqrt()
    }
}

/// Neighbor search, parallel over rows. Boundary points (`d == R`) are excluded,
/// and terminal transitions get an empty `M'` row regardless of geometry.
pub fn build_neighbor_graph(
    dataset: &Dataset,
    metric: &StateActionMetric,
    policy: &dyn EvaluationPolicy,
    radius: f64,
) -> Result<NeighborGraph> {
    if metric.dim() != dataset.state_dim() {
        return Err(OpeError::InvalidConfig(format!(
            "metric has {} weights but states have dimension {}",
            metric.dim(),
            dataset.state_dim()
        )));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(OpeError::InvalidConfig(format!(
            "radius must be positive, got {radius}"
        )));
    }
    let ts = dataset.transitions();
    let n = ts.len();
    // Sort-and-sweep along the weighted axis with the widest spread: any
    // neighbor lies within `radius` of the query along that axis.
    let axis = (0..metric.dim())
        .max_by(|&a, &b| spread(ts, metric, a).total_cmp(&spread(ts, metric, b)))
        .unwrap_or(0);
    let scale = metric.weights().get(axis).map_or(0.0, |w| w.sqrt());
    let key = |x: &[f64]| if scale > 0.0 { scale * x[axis] } else { 0.0 };
    let mut by_action: Vec<Vec<(f64, usize)>> = vec![Vec::new(); dataset.action_count()];
    for (j, t) in ts.iter().enumerate() {
        by_action[t.action].push((key(&t.state), j));
    }
    for list in &mut by_action {
        list.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }
    let search = |x: &[f64], a: usize| -> Vec<usize> {
        let Some(cands) = by_action.get(a) else {
            return Vec::new();
        };
        let k = key(x);
        let lo = cands.partition_point(|c| c.0 < k - radius);
        let hi = cands.partition_point(|c| c.0 <= k + radius);
        let mut out: Vec<usize> = cands[lo..hi]
            .iter()
            .map(|c| c.1)
            .filter(|&j| metric.within(x, a, &ts[j].state, ts[j].action, radius))
            .collect();
        out.sort_unstable();
        out
    };
    let m_lists: Vec<Vec<usize>> = ts.par_iter().map(|t| search(&t.state, t.action)).collect();
    let mp_lists: Vec<Vec<usize>> = ts
        .par_iter()
        .map(|t| {
            if t.is_terminal {
                Vec::new()
            } else {
                search(&t.next_state, policy.action(&t.next_state))
            }
        })
        .collect();
    Ok(NeighborGraph::from_lists(n, m_lists, mp_lists))
}
