//! Pilot-run prior correction for parameters without usable prior
//! knowledge.
//!
//! The target parameter is probed `n0` times from a broad uniform prior with
//! every other parameter held fixed. The `np` probes with the smallest
//! discrepancy define a Gaussian: its mean is the parameter value of the best
//! probe and its variance is the mean squared deviation of the retained
//! probe values from that mean.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ParameterVector, Prior};
use crate::converter::{ConverterSpec, Simulator, Waveform};
use crate::error::{Error, Result};
use crate::smc::distance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorCorrectionConfig {
    pub n0: usize,
    pub np: usize,
    pub broad_prior: Prior,
    pub target_parameter: String,
}

impl PriorCorrectionConfig {
    pub fn new(target: impl Into<String>, low: f64, high: f64) -> Self {
        Self {
            n0: 200,
            np: 20,
            broad_prior: Prior::Uniform { low, high },
            target_parameter: target.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1 <= self.np && self.np <= self.n0) {
            return Err(Error::InvalidArgument(format!(
                "prior correction needs 1 <= np ({}) <= n0 ({})",
                self.np, self.n0
            )));
        }
        match self.broad_prior {
            Prior::Uniform { .. } => self.broad_prior.validate(&self.target_parameter),
            Prior::Gaussian { .. } => Err(Error::InvalidPrior {
                name: self.target_parameter.clone(),
                reason: "broad prior for correction must be uniform".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionResult {
    pub parameter: String,
    pub mean: f64,
    pub var: f64,
    pub best_discrepancy: f64,
    /// Retained probes as `(value, discrepancy)`, best first.
    pub retained: Vec<(f64, f64)>,
    pub n_probes: usize,
    pub n_divergent: usize,
}

impl CorrectionResult {
    /// The fitted prior. A zero variance (all retained probes coincide) is
    /// floored so the result stays a proper density.
    pub fn prior(&self) -> Prior {
        let floor = (self.mean.abs() * 1e-9).powi(2).max(f64::MIN_POSITIVE);
        Prior::Gaussian {
            mean: self.mean,
            var: self.var.max(floor),
        }
    }
}

/// Runs the correction against an arbitrary probe discrepancy. Probe values
/// are drawn sequentially from one seeded stream, so a larger `n0` extends
/// the same probe list.
pub fn correct_prior_with<F>(cfg: &PriorCorrectionConfig, seed: u64, discrepancy: F) -> Result<CorrectionResult>
where
    F: Fn(f64) -> Result<f64> + Sync + Send,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..cfg.n0)
        .map(|_| cfg.broad_prior.sample(&mut rng, false))
        .collect();
    let rhos = crate::parallel::map(&values, |&v| discrepancy(v));

    let mut probes = Vec::with_capacity(cfg.n0);
    let mut n_divergent = 0;
    for (v, rho) in values.iter().zip(rhos) {
        match rho {
            Ok(r) if r.is_finite() => probes.push((*v, r)),
            Ok(_) | Err(Error::Divergence { .. }) => n_divergent += 1,
            Err(e) => return Err(e),
        }
    }
    if probes.is_empty() {
        return Err(Error::CorrectionFailed(cfg.n0));
    }
    // Stable sort keeps the draw order among equal discrepancies.
    probes.sort_by(|a, b| a.1.total_cmp(&b.1));
    probes.truncate(cfg.np);

    let (mean, best_discrepancy) = probes[0];
    let var = probes.iter().map(|(v, _)| (v - mean).powi(2)).sum::<f64>() / probes.len() as f64;
    Ok(CorrectionResult {
        parameter: cfg.target_parameter.clone(),
        mean,
        var,
        best_discrepancy,
        retained: probes,
        n_probes: cfg.n0,
        n_divergent,
    })
}

/// Prior correction on the converter model: each probe simulates `spec`
/// with `fixed_others` applied and the target parameter set to the probe
/// value, scored against `measurements` with the waveform distance.
pub fn correct_prior(
    cfg: &PriorCorrectionConfig,
    spec: &ConverterSpec,
    fixed_others: &ParameterVector,
    measurements: &Waveform,
    seed: u64,
) -> Result<CorrectionResult> {
    if !ConverterSpec::is_parameter(&cfg.target_parameter) {
        return Err(Error::UnknownParameter(cfg.target_parameter.clone()));
    }
    let base = fixed_others.apply_to(spec)?;
    base.validate()?;
    correct_prior_with(cfg, seed, |value| {
        let mut probe = base.clone();
        probe.set(&cfg.target_parameter, value)?;
        match Simulator::new(&probe) {
            Ok(sim) => {
                let z = sim.run()?;
                distance(&z, measurements)
            }
            // Probe values outside the valid spec domain (e.g. exactly zero
            // inductance) behave like divergent runs.
            Err(Error::InvalidSpec(_)) | Err(Error::DegenerateTopology(_)) => Err(Error::Divergence {
                time: 0.0,
                params: vec![(cfg.target_parameter.clone(), value)],
            }),
            Err(e) => Err(e),
        }
    })
}
