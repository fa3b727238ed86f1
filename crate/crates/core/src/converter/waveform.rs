use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampled output trajectories on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub t: Vec<f64>,
    pub v_out: Vec<f64>,
    pub i_out: Vec<f64>,
}

impl Waveform {
    pub fn new(t: Vec<f64>, v_out: Vec<f64>, i_out: Vec<f64>) -> Result<Self> {
        if t.len() != v_out.len() || t.len() != i_out.len() {
            return Err(Error::InvalidArgument(format!(
                "channel lengths differ: t={}, v_out={}, i_out={}",
                t.len(),
                v_out.len(),
                i_out.len()
            )));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "sample times must be strictly increasing".into(),
            ));
        }
        Ok(Self { t, v_out, i_out })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Sample spacing, taken from the first interval.
    pub fn dt(&self) -> Option<f64> {
        (self.t.len() >= 2).then(|| self.t[1] - self.t[0])
    }

    /// Checks that `other` lives on the same sample grid (same length and
    /// sample instants within a relative 1e-9 of the spacing).
    pub fn check_same_grid(&self, other: &Waveform) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::GridMismatch(format!(
                "{} vs {} samples",
                self.len(),
                other.len()
            )));
        }
        let tol = self.dt().unwrap_or(1.0) * 1e-9;
        if let Some((k, (a, b))) = self
            .t
            .iter()
            .zip(&other.t)
            .enumerate()
            .find(|(_, (a, b))| (*a - *b).abs() > tol)
        {
            return Err(Error::GridMismatch(format!(
                "sample {k} at t = {a} vs t = {b}"
            )));
        }
        Ok(())
    }

    /// The trailing `ceil(fraction * K)` samples, with time rebased to zero.
    pub fn steady_state_window(&self, fraction: f64) -> Result<Waveform> {
        if self.is_empty() {
            return Err(Error::EmptyWaveform);
        }
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "window fraction {fraction} must lie in (0, 1]"
            )));
        }
        let k = self.len();
        let keep = ((fraction * k as f64).ceil() as usize).clamp(1, k);
        let start = k - keep;
        let t0 = self.t[start];
        Ok(Waveform {
            t: self.t[start..].iter().map(|t| t - t0).collect(),
            v_out: self.v_out[start..].to_vec(),
            i_out: self.i_out[start..].to_vec(),
        })
    }

    /// Samples with `t` in `[from, to)`, time kept as is.
    pub fn slice_time(&self, from: f64, to: f64) -> Waveform {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&k| self.t[k] >= from && self.t[k] < to)
            .collect();
        Waveform {
            t: idx.iter().map(|&k| self.t[k]).collect(),
            v_out: idx.iter().map(|&k| self.v_out[k]).collect(),
            i_out: idx.iter().map(|&k| self.i_out[k]).collect(),
        }
    }

    pub fn mean_v_out(&self) -> f64 {
        mean(&self.v_out)
    }

    pub fn ripple_v_out(&self) -> f64 {
        let (lo, hi) = self
            .v_out
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        hi - lo
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
