use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageops::ScaleSchedule;

/// Sign applied to the momentum in the patch update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `p - alpha * sign(g)`: minimizes the detection objective.
    #[default]
    Descent,
    /// `p + alpha * sign(g)`.
    Ascent,
}

impl Direction {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "descent" => Ok(Self::Descent),
            "ascent" => Ok(Self::Ascent),
            _ => Err(Error::InvalidArgument(format!("unknown direction {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Descent => "descent",
            Self::Ascent => "ascent",
        }
    }
}

/// Balance weight of the middle-layer loss for each tabulated patch side.
pub const LAMBDA_TABLE: [(usize, f64); 7] = [
    (10, 1e-3),
    (20, 1e-1),
    (30, 1e-1),
    (50, 1e-3),
    (100, 1e-1),
    (150, 1e-1),
    (200, 1e-2),
];

/// Default balance weight for a patch side: the tabulated value of the
/// nearest tabulated side (ties go to the smaller side).
pub fn lambda_for_side(side: usize) -> f64 {
    LAMBDA_TABLE
        .iter()
        .min_by_key(|(s, _)| s.abs_diff(side))
        .map(|&(_, l)| l)
        .expect("table is non-empty")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Number of iterations.
    pub iterations: usize,
    /// Step size of the sign update.
    pub alpha: f64,
    /// Bound on `1 - p` per element.
    pub epsilon: f64,
    /// Patch side length.
    pub side: usize,
    /// Weight of the middle-layer loss.
    pub lambda: f64,
    /// Momentum decay.
    pub mu: f64,
    /// Iterations per scale-schedule stage.
    pub beta: u32,
    pub batch_size: usize,
    /// MUI at or above which the middle-layer loss is active.
    pub mui_gate: f64,
    pub seed: u64,
    pub direction: Direction,
    /// Ablation switch for the middle-layer loss.
    pub middle_loss: bool,
    /// Ablation switch for the scaling applied before fusion.
    pub pre_scale: bool,
    /// Taps used by the middle-layer loss; empty selects every tap.
    pub taps: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_side(30)
    }
}

impl TrainConfig {
    /// Defaults with the side-dependent balance weight.
    pub fn for_side(side: usize) -> Self {
        Self {
            iterations: 100,
            alpha: 3.0 / 255.0,
            epsilon: 30.0 / 255.0,
            side,
            lambda: lambda_for_side(side),
            mu: 0.1,
            beta: 6,
            batch_size: 100,
            mui_gate: 0.06,
            seed: 0,
            direction: Direction::Descent,
            middle_loss: true,
            pre_scale: true,
            taps: Vec::new(),
        }
    }

    pub fn schedule(&self) -> ScaleSchedule {
        ScaleSchedule::with_beta(self.beta)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let unit_open = |v: f64| v > 0.0 && v < 1.0;
        if !unit_open(self.alpha) {
            return bad(format!("alpha must be in (0,1), got {}", self.alpha));
        }
        if !unit_open(self.epsilon) {
            return bad(format!("epsilon must be in (0,1), got {}", self.epsilon));
        }
        if self.iterations == 0 || self.side == 0 || self.batch_size == 0 {
            return bad("iterations, side and batch_size must be at least 1".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(0.0..1.0).contains(&self.mu) {
            return bad(format!("mu must be in [0,1), got {}", self.mu));
        }
        if !(self.mui_gate >= 0.0 && self.mui_gate < self.epsilon) {
            return bad(format!("mui_gate must be in [0, epsilon), got {}", self.mui_gate));
        }
        if self.beta == 0 {
            return bad("beta must be at least 1".into());
        }
        Ok(())
    }
}
