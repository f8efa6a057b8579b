use serde::{Deserialize, Serialize};

use crate::error::{OpeError, Result};

/// Weighted Euclidean distance over states; pairs with different actions are
/// infinitely far apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateActionMetric {
    weights: Vec<f64>,
}

impl StateActionMetric {
    pub fn euclidean(dim: usize) -> Self {
        Self {
            weights: vec![1.0; dim],
        }
    }

    pub fn weighted(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(OpeError::InvalidConfig(format!(
                "metric weights must be finite and nonnegative, got {weights:?}"
            )));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Squared weighted distance between two states, ignoring actions.
    pub fn state_distance_sq(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.weights.len());
        debug_assert_eq!(y.len(), self.weights.len());
        self.weights
            .iter()
            .zip(x.iter().zip(y))
            .map(|(w, (a, b))| w * (a - b) * (a - b))
            .sum()
    }

    pub fn distance(&self, x: &[f64], a: usize, y: &[f64], b: usize) -> f64 {
        if a != b {
            return f64::INFINITY;
        }
        self.state_distance_sq(x, y).sqrt()
    }

    /// Strict neighborhood test `d < radius`; points exactly on the boundary are
    /// outside.
    pub fn within(&self, x: &[f64], a: usize, y: &[f64], b: usize, radius: f64) -> bool {
        a == b && self.state_distance_sq(x, y) < radius * radius
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cross_action_distance_is_infinite() {
        let m = StateActionMetric::euclidean(2);
        assert!(m.distance(&[0.0, 0.0], 0, &[0.0, 0.0], 1).is_infinite());
        assert!(!m.within(&[0.0, 0.0], 0, &[0.0, 0.0], 1, 1e9));
    }

    #[test]
    fn boundary_is_excluded() {
        let m = StateActionMetric::euclidean(1);
        assert!(!m.within(&[0.0], 0, &[0.5], 0, 0.5));
        assert!(m.within(&[0.0], 0, &[0.4999], 0, 0.5));
    }

    #[test]
    fn weights_scale_dimensions() {
        let m = StateActionMetric::weighted(vec![4.0, 0.0]).unwrap();
        assert_eq!(m.distance(&[1.0, 5.0], 0, &[0.0, -5.0], 0), 2.0);
        assert!(StateActionMetric::weighted(vec![-1.0]).is_err());
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, 3)
    }

    proptest! {
        #[test]
        fn symmetric_and_zero_on_diagonal(x in vec3(), y in vec3(), w in proptest::collection::vec(0.0f64..5.0, 3)) {
            let m = StateActionMetric::weighted(w).unwrap();
            prop_assert_eq!(m.distance(&x, 0, &y, 0), m.distance(&y, 0, &x, 0));
            prop_assert_eq!(m.distance(&x, 2, &x, 2), 0.0);
        }

        #[test]
        fn triangle_inequality_within_action(x in vec3(), y in vec3(), z in vec3(), w in proptest::collection::vec(0.0f64..5.0, 3)) {
            let m = StateActionMetric::weighted(w).unwrap();
            let lhs = m.distance(&x, 1, &z, 1);
            let rhs = m.distance(&x, 1, &y, 1) + m.distance(&y, 1, &z, 1);
            prop_assert!(lhs <= rhs + 1e-9);
        }
    }
}
