//! Tolerance schedule: median of a pilot run for the first generation, then
//! a q-quantile of the accepted discrepancies, forced to decrease strictly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Factor applied to the current tolerance when the quantile fails to
/// decrease it.
pub const FORCED_DECREASE: f64 = 0.95;

/// Linear-interpolation quantile (`h = (n - 1) q`) of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("quantile of an empty list".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("quantile level {q} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// First tolerance: the median of the pilot discrepancies, so that about
/// half of the prior draws are accepted.
pub fn init_threshold(pilot_rhos: &[f64]) -> Result<f64> {
    if pilot_rhos.is_empty() {
        return Err(Error::InvalidArgument("no pilot discrepancies".into()));
    }
    quantile(pilot_rhos, 0.5)
}

/// Next tolerance from the accepted discrepancies of the current
/// generation. Falls back to `0.95 * current` when the quantile would not
/// decrease the tolerance.
pub fn next_threshold(accepted_rhos: &[f64], q: f64, current: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!("q = {q} must lie in (0, 1)")));
    }
    let candidate = quantile(accepted_rhos, q)?;
    Ok(if candidate >= current {
        FORCED_DECREASE * current
    } else {
        candidate
    })
}

/// Realized tolerance sequence and the rule that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSchedule {
    pub epsilons: Vec<f64>,
    pub q: f64,
    pub epsilon_min: f64,
    pub t_max: usize,
    pub k_ini: usize,
}

impl ThresholdSchedule {
    pub fn is_strictly_decreasing(&self) -> bool {
        self.epsilons.windows(2).all(|w| w[1] < w[0])
    }
}
