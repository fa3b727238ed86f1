//! Particle weights.
//!
//! The adaptive scheme weights the first generation by reciprocal
//! discrepancy and later generations by a `beta`-mix of prior density and
//! reciprocal discrepancy. The baseline scheme is the standard importance
//! weight of population Monte Carlo ABC.

use super::kernel::PerturbationKernel;
use crate::error::{Error, Result};

/// Discrepancies below this are clamped before taking reciprocals.
pub const RHO_FLOOR: f64 = 1e-30;

pub(crate) fn clamp_rho(rho: f64) -> f64 {
    rho.max(RHO_FLOOR)
}

/// First-generation weights `w_i ∝ 1/rho_i`, normalized.
pub fn initial_weights(rhos: &[f64]) -> Result<Vec<f64>> {
    let mut w: Vec<f64> = rhos.iter().map(|&r| 1.0 / clamp_rho(r)).collect();
    normalize(&mut w)?;
    Ok(w)
}

/// Unnormalized adaptive weight `beta * prior + (1 - beta) / rho`.
pub fn adaptive_weight(prior_density: f64, rho: f64, beta: f64) -> f64 {
    beta * prior_density + (1.0 - beta) / clamp_rho(rho)
}

/// Unnormalized importance weight
/// `prior(x) / sum_j w_j kernel(x | parent_j)`.
///
/// Returns `None` when the candidate is unreachable from every parent.
pub fn baseline_weight(
    prior_density: f64,
    parents: &[Vec<f64>],
    parent_weights: &[f64],
    candidate: &[f64],
    kernel: &PerturbationKernel,
) -> Option<f64> {
    let denom: f64 = parents
        .iter()
        .zip(parent_weights)
        .map(|(p, &w)| w * kernel.density(candidate, p))
        .sum();
    (denom > 0.0 && denom.is_finite()).then(|| prior_density / denom)
}

/// Scales `w` in place to sum to one.
pub fn normalize(w: &mut [f64]) -> Result<()> {
    let total: f64 = w.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "cannot normalize weights with total {total}"
        )));
    }
    for x in w.iter_mut() {
        *x /= total;
    }
    Ok(())
}
