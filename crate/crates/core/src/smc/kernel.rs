//! Gaussian perturbation kernel with covariance `2 * Gamma`, where `Gamma`
//! is the weighted empirical covariance of the current population.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Relative diagonal jitter used when the covariance is not positive
/// definite.
pub const REGULARIZATION: f64 = 1e-12;

/// Weighted mean and (biased, weights summing to one) covariance.
pub fn weighted_covariance(points: &[Vec<f64>], weights: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = points.len();
    if n == 0 || n != weights.len() {
        return Err(Error::InvalidArgument(format!(
            "{n} points with {} weights",
            weights.len()
        )));
    }
    let d = points[0].len();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("weights sum to zero".into()));
    }
    let mut mean = DVector::zeros(d);
    for (p, &w) in points.iter().zip(weights) {
        for (m, &x) in mean.iter_mut().zip(p) {
            *m += w / total * x;
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    for (p, &w) in points.iter().zip(weights) {
        let dx = DVector::from_iterator(d, p.iter().zip(mean.iter()).map(|(x, m)| x - m));
        cov.ger(w / total, &dx, &dx, 1.0);
    }
    // Exact symmetry.
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok((mean, cov))
}

#[derive(Debug, Clone)]
pub struct PerturbationKernel {
    /// Population covariance `Gamma` (before the factor two).
    gamma: DMatrix<f64>,
    /// Kernel covariance actually used, `2 * Gamma` plus any jitter.
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
    regularized: bool,
}

impl PerturbationKernel {
    /// Fits the kernel to a weighted population.
    pub fn fit(points: &[Vec<f64>], weights: &[f64]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidArgument(
                "kernel fit needs at least two particles".into(),
            ));
        }
        let (mean, gamma) = weighted_covariance(points, weights)?;
        Self::from_gamma(gamma, &mean)
    }

    /// Builds the kernel from `Gamma`. `scale_hint` sets the jitter size for
    /// directions with zero variance.
    pub fn from_gamma(gamma: DMatrix<f64>, scale_hint: &DVector<f64>) -> Result<Self> {
        let d = gamma.nrows();
        let mut cov = &gamma * 2.0;
        let mut regularized = false;
        let trace = gamma.trace();
        let jitter: Vec<f64> = (0..d)
            .map(|i| {
                let g = gamma[(i, i)];
                let s = if g > 0.0 {
                    g
                } else if trace > 0.0 {
                    trace / d as f64
                } else if scale_hint[i] != 0.0 {
                    scale_hint[i] * scale_hint[i]
                } else {
                    1.0
                };
                REGULARIZATION * s
            })
            .collect();
        let mut chol = Cholesky::new(cov.clone());
        let mut factor = 1.0;
        while chol.is_none() {
            regularized = true;
            for (i, j) in jitter.iter().enumerate() {
                cov[(i, i)] += factor * j;
            }
            factor *= 10.0;
            if factor > 1e24 {
                return Err(Error::InvalidArgument(
                    "kernel covariance cannot be regularized".into(),
                ));
            }
            chol = Cholesky::new(cov.clone());
        }
        let chol = chol.expect("loop exits with a factorization");
        let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        let log_norm = -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(Self {
            gamma,
            cov,
            chol,
            log_norm,
            regularized,
        })
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn was_regularized(&self) -> bool {
        self.regularized
    }

    /// Draws `center + L z` with `z` standard normal.
    pub fn perturb<R: Rng + ?Sized>(&self, center: &[f64], rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let step = self.chol.l() * z;
        center.iter().zip(step.iter()).map(|(c, s)| c + s).collect()
    }

    pub fn log_density(&self, x: &[f64], center: &[f64]) -> f64 {
        let d = self.dim();
        let dx = DVector::from_iterator(d, x.iter().zip(center).map(|(a, b)| a - b));
        let y = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&dx)
            .expect("cholesky factor is non-singular");
        self.log_norm - 0.5 * y.norm_squared()
    }

    /// Kernel density of `x` given the parent `center`.
    pub fn density(&self, x: &[f64], center: &[f64]) -> f64 {
        self.log_density(x, center).exp()
    }
}
