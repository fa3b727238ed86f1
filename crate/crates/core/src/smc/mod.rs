//! Adaptive approximate Bayesian computation with a sequential Monte Carlo
//! sampler.

mod compare;
mod distance;
mod engine;
pub mod kernel;
mod population;
pub mod threshold;
pub mod weights;

pub use compare::{compare_weight_schemes, win_fraction, ComparisonRow, SchemeSummary};
pub use distance::{distance, stacked_distance};
pub use engine::{
    smc_run, smc_run_with, ConverterModel, EngineConfig, Model, SmcResult, StopReason, WeightScheme,
};
pub use kernel::{weighted_covariance, PerturbationKernel};
pub use population::{GenerationDiagnostics, Particle, Population, FORMAT_VERSION};
pub use threshold::{init_threshold, next_threshold, quantile, ThresholdSchedule};
pub use weights::{adaptive_weight, baseline_weight, initial_weights, normalize};

/// Kernel fitted to a finished population (covariance `2 * Gamma`).
pub fn fit_kernel(pop: &Population) -> crate::Result<PerturbationKernel> {
    PerturbationKernel::fit(&pop.values(), &pop.weights())
}
