//! 2D navigation: trajectories start at the origin and take unit steps at 45
//! degrees with Gaussian heading noise. Reward is a Gaussian bump over states.
//! Transitions starting inside region boxes are thinned out at random.
//!
//! Default fixture: 16 steps per trajectory, bump centred 8.5 units along the
//! diagonal. Region I (dense) covers diagonal distance 1..4, region II
//! (sparsified, upstream of the bump) 5..8, region III (sparsified, downstream of
//! the bump) 12..16.

use std::f64::consts::FRAC_PI_4;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::AnalysisConfig;
use crate::data::{Dataset, StepValidation, Transition};
use crate::error::{OpeError, Result};
use crate::metric::StateActionMetric;
use crate::pipeline::{Analysis, EvaluationSetup};
use crate::policy::ConstantPolicy;

pub const RADIUS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    I,
    II,
    III,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::I, Region::II, Region::III];

    pub fn name(self) -> &'static str {
        match self {
            Region::I => "I",
            Region::II => "II",
            Region::III => "III",
        }
    }
}

/// Axis-aligned box `[lo, hi]` in both coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionBox {
    pub region: Region,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub keep_probability: f64,
}

impl RegionBox {
    pub fn contains(&self, x: &[f64]) -> bool {
        (0..2).all(|d| x[d] >= self.lo[d] && x[d] <= self.hi[d])
    }

    /// The square spanning diagonal distances `from..to`, widened by `margin`
    /// across the diagonal.
    pub fn along_diagonal(
        region: Region,
        from: f64,
        to: f64,
        margin: f64,
        keep_probability: f64,
    ) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            region,
            lo: [from * s - margin, from * s - margin],
            hi: [to * s + margin, to * s + margin],
            keep_probability,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavigationConfig {
    pub num_trajectories: usize,
    pub trajectory_length: usize,
    pub step_length: f64,
    /// Standard deviation of the per-step heading, in radians.
    pub heading_noise: f64,
    pub reward_center: [f64; 2],
    pub reward_width: f64,
    pub reward_amplitude: f64,
    pub regions: Vec<RegionBox>,
    pub seed: u64,
}

impl Default for NavigationConfig {
    fn default() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            num_trajectories: 40,
            trajectory_length: 16,
            step_length: 1.0,
            heading_noise: 0.3,
            reward_center: [8.5 * s, 8.5 * s],
            reward_width: 1.0,
            reward_amplitude: 1.0,
            regions: vec![
                RegionBox::along_diagonal(Region::I, 1.0, 4.0, 0.0, 1.0),
                RegionBox::along_diagonal(Region::II, 5.0, 8.0, 0.0, 0.1),
                RegionBox::along_diagonal(Region::III, 12.0, 16.0, 0.0, 0.1),
            ],
            seed: 0,
        }
    }
}

impl NavigationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reward_width.is_nan() || self.reward_width <= 0.0 {
            return Err(OpeError::InvalidConfig(
                "reward width must be positive".into(),
            ));
        }
        if self
            .regions
            .iter()
            .any(|r| !(0.0..=1.0).contains(&r.keep_probability))
        {
            return Err(OpeError::InvalidConfig(
                "keep probabilities must lie in [0, 1]".into(),
            ));
        }
        if self.num_trajectories == 0 || self.trajectory_length == 0 {
            return Err(OpeError::InvalidConfig("need at least one step".into()));
        }
        Ok(())
    }

    pub fn reward(&self, x: &[f64]) -> f64 {
        let d2 = (x[0] - self.reward_center[0]).powi(2) + (x[1] - self.reward_center[1]).powi(2);
        self.reward_amplitude * (-d2 / (2.0 * self.reward_width * self.reward_width)).exp()
    }

    /// The first region box containing `x`.
    pub fn region_of(&self, x: &[f64]) -> Option<Region> {
        self.regions
            .iter()
            .find(|b| b.contains(x))
            .map(|b| b.region)
    }
}

#[derive(Debug, Clone)]
pub struct NavigationData {
    pub dataset: Dataset,
    /// Region of each transition's state, in dataset order.
    pub regions: Vec<Option<Region>>,
}

#[derive(Serialize)]
struct RegionRecord<'a> {
    id: &'a str,
    region: Option<&'static str>,
}

impl NavigationData {
    /// Sidecar file content: one `{id, region}` object per line.
    pub fn regions_jsonl(&self) -> String {
        let mut out = String::new();
        for (t, r) in self.dataset.transitions().iter().zip(&self.regions) {
            let rec = RegionRecord {
                id: &t.id,
                region: r.map(Region::name),
            };
            out.push_str(&serde_json::to_string(&rec).expect("serializes"));
            out.push('\n');
        }
        out
    }
}

/// Generates the dataset. Every transition uses action 0; the origin start makes
/// all initial transitions identical. Thinned datasets have step-index gaps.
pub fn generate_navigation(config: &NavigationConfig) -> Result<NavigationData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let heading = Normal::new(FRAC_PI_4, config.heading_noise.max(0.0))
        .map_err(|e| OpeError::InvalidConfig(e.to_string()))?;
    let mut transitions = Vec::new();
    let mut regions = Vec::new();
    for n in 0..config.num_trajectories {
        let mut x = vec![0.0, 0.0];
        for t in 0..config.trajectory_length {
            let theta: f64 = if config.heading_noise > 0.0 {
                heading.sample(&mut rng)
            } else {
                FRAC_PI_4
            };
            let next = vec![
                x[0] + config.step_length * theta.cos(),
                x[1] + config.step_length * theta.sin(),
            ];
            let region = config.region_of(&x);
            let keep = config
                .regions
                .iter()
                .find(|b| b.contains(&x))
                .map_or(1.0, |b| b.keep_probability);
            // Always draw so the trajectory geometry does not depend on thinning.
            let u: f64 = rng.random();
            if u < keep {
                transitions.push(Transition {
                    id: format!("n{n}s{t}"),
                    trajectory_id: format!("n{n}"),
                    step_index: t,
                    state: x.clone(),
                    action: 0,
                    reward: config.reward(&x),
                    next_state: next.clone(),
                    behavior_prob: None,
                    is_initial: t == 0,
                    is_terminal: t + 1 == config.trajectory_length,
                });
                regions.push(region);
            }
            x = next;
        }
    }
    let dataset = Dataset::with_validation(transitions, StepValidation::AllowGaps)?;
    Ok(NavigationData { dataset, regions })
}

/// Kernel FQE of "keep going" (action 0) with Euclidean distance.
pub fn evaluation_setup() -> EvaluationSetup {
    EvaluationSetup::new(
        AnalysisConfig {
            radius: RADIUS,
            ..AnalysisConfig::default()
        },
        std::sync::Arc::new(ConstantPolicy(0)),
        StateActionMetric::euclidean(2),
    )
}

/// `(region, |I_j|)` for every labelled transition with a defined influence.
pub fn region_influences(data: &NavigationData, analysis: &Analysis) -> Vec<(Region, f64)> {
    analysis
        .report
        .units
        .iter()
        .zip(&data.regions)
        .filter_map(|(u, r)| Some(((*r)?, u.influence?.abs())))
        .collect()
}
