use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Growth schedule of the random scaling range.
///
/// At iteration `t` the range is `[max(down^k, floor), min(up^k, cap)]`
/// with `k = ceil(t / beta)`: it starts narrow and widens every `beta`
/// iterations until it saturates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleSchedule {
    pub beta: u32,
    pub floor_a: f64,
    pub cap_b: f64,
    pub base_down: f64,
    pub base_up: f64,
}

impl Default for ScaleSchedule {
    fn default() -> Self {
        Self {
            beta: 6,
            floor_a: 0.6,
            cap_b: 2.0,
            base_down: 0.9,
            base_up: 1.1,
        }
    }
}

impl ScaleSchedule {
    pub fn with_beta(beta: u32) -> Self {
        Self {
            beta,
            ..Self::default()
        }
    }

    pub fn range(&self, t: usize) -> Result<(f64, f64)> {
        if t == 0 {
            return Err(Error::InvalidArgument("iterations are numbered from 1".into()));
        }
        if self.beta == 0 {
            return Err(Error::InvalidArgument("beta must be positive".into()));
        }
        let k = t.div_ceil(self.beta as usize) as i32;
        let a = self.base_down.powi(k).max(self.floor_a);
        let b = self.base_up.powi(k).min(self.cap_b);
        Ok((a, b))
    }
}

pub fn schedule_range(t: usize, schedule: &ScaleSchedule) -> Result<(f64, f64)> {
    schedule.range(t)
}
