//! Prior distributions over calibrated parameters.
//!
//! Every converter parameter is a non-negative physical quantity, so
//! Gaussian priors are truncated at zero: sampling redraws negative values and
//! the density is renormalized by `P(X >= 0)`.

mod correction;
mod vector;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

pub use correction::{correct_prior, correct_prior_with, CorrectionResult, PriorCorrectionConfig};
pub use vector::{ParamEntry, ParameterVector};

/// Rejection attempts before truncated Gaussian sampling switches to the
/// inverse CDF.
const MAX_REDRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Prior {
    Uniform { low: f64, high: f64 },
    Gaussian { mean: f64, var: f64 },
}

impl Prior {
    pub fn validate(&self, name: &str) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::InvalidPrior {
                name: name.to_string(),
                reason: reason.to_string(),
            })
        };
        match *self {
            Prior::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite()) {
                    return fail("bounds must be finite");
                }
                if !(low < high) {
                    return fail("uniform prior needs low < high");
                }
            }
            Prior::Gaussian { mean, var } => {
                if !(mean.is_finite() && var.is_finite()) {
                    return fail("mean and variance must be finite");
                }
                if !(var > 0.0) {
                    return fail("gaussian prior needs var > 0");
                }
            }
        }
        Ok(())
    }

    /// Mean of the (possibly truncated) distribution.
    pub fn mean(&self, truncate_at_zero: bool) -> f64 {
        match *self {
            Prior::Uniform { low, high } => {
                if truncate_at_zero && low < 0.0 {
                    high.max(0.0) / 2.0
                } else {
                    0.5 * (low + high)
                }
            }
            Prior::Gaussian { mean, var } => {
                if !truncate_at_zero {
                    return mean;
                }
                // Mean of a normal truncated to [0, inf).
                let sd = var.sqrt();
                let alpha = -mean / sd;
                let z = 1.0 - std_normal_cdf(alpha);
                if z <= 0.0 {
                    return 0.0;
                }
                mean + sd * std_normal_pdf(alpha) / z
            }
        }
    }

    pub fn density(&self, x: f64, truncate_at_zero: bool) -> f64 {
        if !x.is_finite() || (truncate_at_zero && x < 0.0) {
            return 0.0;
        }
        match *self {
            Prior::Uniform { low, high } => {
                let lo = if truncate_at_zero { low.max(0.0) } else { low };
                if x < lo || x > high || high <= lo {
                    0.0
                } else {
                    1.0 / (high - lo)
                }
            }
            Prior::Gaussian { mean, var } => {
                let sd = var.sqrt();
                let z = (x - mean) / sd;
                let pdf = std_normal_pdf(z) / sd;
                if truncate_at_zero {
                    let mass = 1.0 - std_normal_cdf(-mean / sd);
                    if mass > 0.0 {
                        pdf / mass
                    } else {
                        0.0
                    }
                } else {
                    pdf
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, truncate_at_zero: bool) -> f64 {
        match *self {
            Prior::Uniform { low, high } => {
                let lo = if truncate_at_zero { low.max(0.0) } else { low };
                let u: f64 = rng.random();
                lo + (high - lo) * u
            }
            Prior::Gaussian { mean, var } => {
                let sd = var.sqrt();
                let normal = Normal::new(mean, sd).expect("validated variance");
                if !truncate_at_zero {
                    return normal.sample(rng);
                }
                for _ in 0..MAX_REDRAWS {
                    let x = normal.sample(rng);
                    if x >= 0.0 {
                        return x;
                    }
                }
                // Almost all mass is negative: invert the CDF on [P(X<0), 1).
                let lo = std_normal_cdf(-mean / sd);
                let u: f64 = lo + (1.0 - lo) * rng.random::<f64>();
                let n = statrs::distribution::Normal::new(mean, sd).expect("validated variance");
                statrs::distribution::ContinuousCDF::inverse_cdf(&n, u).max(0.0)
            }
        }
    }
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Named, ordered product of independent priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSet {
    entries: Vec<(String, Prior)>,
    /// Truncate every Gaussian at zero (physical parameters).
    #[serde(default = "default_truncate")]
    truncate_at_zero: bool,
}

fn default_truncate() -> bool {
    true
}

impl PriorSet {
    pub fn new<S: Into<String>>(entries: impl IntoIterator<Item = (S, Prior)>) -> Result<Self> {
        let entries: Vec<(String, Prior)> =
            entries.into_iter().map(|(n, p)| (n.into(), p)).collect();
        if entries.is_empty() {
            return Err(Error::InvalidArgument("empty prior set".into()));
        }
        for (i, (name, prior)) in entries.iter().enumerate() {
            prior.validate(name)?;
            if entries[..i].iter().any(|(n, _)| n == name) {
                return Err(Error::InvalidPrior {
                    name: name.clone(),
                    reason: "duplicate parameter".into(),
                });
            }
        }
        Ok(Self {
            entries,
            truncate_at_zero: true,
        })
    }

    /// Disables the truncation at zero, for priors over unconstrained
    /// quantities.
    pub fn untruncated(mut self) -> Self {
        self.truncate_at_zero = false;
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn entries(&self) -> &[(String, Prior)] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&Prior> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn replace(&mut self, name: &str, prior: Prior) -> Result<()> {
        prior.validate(name)?;
        let slot = self
            .entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        slot.1 = prior;
        Ok(())
    }

    pub fn means(&self) -> Vec<f64> {
        self.entries
            .iter()
            .map(|(_, p)| p.mean(self.truncate_at_zero))
            .collect()
    }

    /// Joint density at a raw value vector ordered like the set.
    pub fn density_values(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.entries.len());
        self.entries
            .iter()
            .zip(values)
            .map(|((_, p), &x)| p.density(x, self.truncate_at_zero))
            .product()
    }

    pub fn sample_values<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.entries
            .iter()
            .map(|(_, p)| p.sample(rng, self.truncate_at_zero))
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterVector {
        self.to_vector(&self.sample_values(rng))
            .expect("prior samples are finite")
    }

    pub fn sample_seeded(&self, seed: u64) -> ParameterVector {
        self.sample(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Joint density of `v`; `v` must carry the same names in the same order.
    pub fn density(&self, v: &ParameterVector) -> Result<f64> {
        self.check_order(v)?;
        Ok(self.density_values(&v.values()))
    }

    pub fn to_vector(&self, values: &[f64]) -> Result<ParameterVector> {
        ParameterVector::from_pairs(self.names().zip(values.iter().copied()))
    }

    fn check_order(&self, v: &ParameterVector) -> Result<()> {
        if v.len() != self.len() || !v.names().eq(self.names()) {
            return Err(Error::InvalidArgument(format!(
                "parameter vector {:?} is not ordered like the prior set {:?}",
                v.names().collect::<Vec<_>>(),
                self.names().collect::<Vec<_>>()
            )));
        }
        Ok(())
    }
}

/// Independent uniform prior set, convenient for tests and stubs.
pub fn uniform_set(bounds: &[(&str, f64, f64)]) -> Result<PriorSet> {
    PriorSet::new(
        bounds
            .iter()
            .map(|&(n, low, high)| (n, Prior::Uniform { low, high })),
    )
}
