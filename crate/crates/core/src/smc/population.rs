use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::priors::ParameterVector;

/// Version tag carried by every JSON artifact the toolkit writes.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    /// Parameter values, ordered like [`Population::names`].
    pub params: Vec<f64>,
    pub discrepancy: f64,
    pub weight: f64,
}

/// Per-generation bookkeeping.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationDiagnostics {
    /// Model simulations run in this generation (`N_s`).
    pub n_sims: usize,
    /// `accepted / N_s`.
    pub acceptance_rate: f64,
    /// Candidates proposed, including those rejected for lying outside the
    /// prior support (which are never simulated).
    pub n_proposals: usize,
    pub n_prior_rejected: usize,
    pub n_divergent: usize,
    /// Accepted particles whose discrepancy was clamped before taking its
    /// reciprocal.
    pub n_clamped_rho: usize,
    /// Candidates dropped because the baseline weight denominator vanished.
    pub n_unreachable: usize,
    pub wall_time_s: f64,
    pub seed: u64,
    pub truncated: bool,
    pub kernel_regularized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub iteration: usize,
    pub names: Vec<String>,
    pub particles: Vec<Particle>,
    pub epsilon_used: f64,
    /// Weighted empirical covariance of this population (`Gamma`).
    pub kernel_cov: Vec<Vec<f64>>,
    pub diagnostics: GenerationDiagnostics,
}

impl Population {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn values(&self) -> Vec<Vec<f64>> {
        self.particles.iter().map(|p| p.params.clone()).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }

    pub fn discrepancies(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.discrepancy).collect()
    }

    pub fn weighted_mean(&self) -> Vec<f64> {
        let d = self.names.len();
        let total: f64 = self.particles.iter().map(|p| p.weight).sum();
        let mut m = vec![0.0; d];
        for p in &self.particles {
            for (mi, x) in m.iter_mut().zip(&p.params) {
                *mi += p.weight / total * x;
            }
        }
        m
    }

    pub fn weighted_std(&self) -> Vec<f64> {
        let mean = self.weighted_mean();
        let total: f64 = self.particles.iter().map(|p| p.weight).sum();
        let mut var = vec![0.0; mean.len()];
        for p in &self.particles {
            for ((v, x), m) in var.iter_mut().zip(&p.params).zip(&mean) {
                *v += p.weight / total * (x - m) * (x - m);
            }
        }
        var.into_iter().map(f64::sqrt).collect()
    }

    pub fn weighted_mean_vector(&self) -> Result<ParameterVector> {
        ParameterVector::from_pairs(self.names.iter().cloned().zip(self.weighted_mean()))
    }

    /// JSON snapshot with a format version header.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Snapshot<'a> {
            format_version: u32,
            #[serde(flatten)]
            population: &'a Population,
        }
        Ok(serde_json::to_string_pretty(&Snapshot {
            format_version: FORMAT_VERSION,
            population: self,
        })?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pop() -> Population {
        Population {
            iteration: 1,
            names: vec!["a".into(), "b".into()],
            particles: vec![
                Particle { params: vec![0.0, 1.0], discrepancy: 0.1, weight: 0.25 },
                Particle { params: vec![4.0, 1.0], discrepancy: 0.2, weight: 0.75 },
            ],
            epsilon_used: 0.2,
            kernel_cov: vec![vec![0.0; 2]; 2],
            diagnostics: GenerationDiagnostics::default(),
        }
    }

    #[test]
    fn weighted_moments() {
        let p = pop();
        assert_eq!(p.weighted_mean(), vec![3.0, 1.0]);
        let sd = p.weighted_std();
        assert!((sd[0] - 3.0f64.sqrt()).abs() < 1e-12);
        assert_eq!(sd[1], 0.0);
    }

    #[test]
    fn snapshot_has_version() {
        let v: serde_json::Value = serde_json::from_str(&pop().to_json().unwrap()).unwrap();
        assert_eq!(v["format_version"], 1);
        assert_eq!(v["iteration"], 1);
        assert_eq!(v["particles"].as_array().unwrap().len(), 2);
    }
}
