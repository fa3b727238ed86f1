//! Paired runs of the two weighting schemes.

use serde::{Deserialize, Serialize};

use super::engine::{smc_run_with, EngineConfig, Model, SmcResult, WeightScheme};
use crate::error::{Error, Result};
use crate::priors::PriorSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    /// Acceptance rate per generation.
    pub acceptance: Vec<f64>,
    /// Acceptance rate of generation 2, if it was reached.
    pub acc_iter2: Option<f64>,
    /// `N * generations / total simulations` over the generations run.
    pub acc_overall: f64,
    /// Simulations over all generations, pilot included.
    pub total_sims: usize,
    pub generations: usize,
    pub truncated: bool,
}

impl SchemeSummary {
    pub fn from_result(res: &SmcResult) -> Self {
        let acceptance = res.acceptance_rates();
        let accepted: usize = res.populations.iter().map(|p| p.len()).sum();
        let sims: usize = res.populations.iter().map(|p| p.diagnostics.n_sims).sum();
        Self {
            acc_iter2: acceptance.get(1).copied(),
            acc_overall: if sims > 0 { accepted as f64 / sims as f64 } else { 0.0 },
            total_sims: res.total_sims(),
            generations: res.populations.len(),
            truncated: res.truncated,
            acceptance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub run: usize,
    pub seed: u64,
    pub proposed: SchemeSummary,
    pub baseline: SchemeSummary,
}

/// Runs `runs` seed-paired comparisons. Run `r` uses seed `cfg.seed + r` for
/// both schemes, so the pilot and generation 1 particles coincide within a
/// pair.
pub fn compare_weight_schemes<M: Model + ?Sized>(
    cfg: &EngineConfig,
    priors: &PriorSet,
    model: &M,
    runs: usize,
) -> Result<Vec<ComparisonRow>> {
    if runs < 1 {
        return Err(Error::InvalidArgument("at least one run required".into()));
    }
    (0..runs)
        .map(|r| {
            let seed = cfg.seed.wrapping_add(r as u64);
            let run_scheme = |scheme| {
                let c = EngineConfig {
                    seed,
                    weight_scheme: scheme,
                    ..cfg.clone()
                };
                smc_run_with(&c, priors, model, |_| {}).map(|res| SchemeSummary::from_result(&res))
            };
            Ok(ComparisonRow {
                run: r,
                seed,
                proposed: run_scheme(WeightScheme::Proposed)?,
                baseline: run_scheme(WeightScheme::Baseline)?,
            })
        })
        .collect()
}

/// Fraction of rows where `better(row)` holds.
pub fn win_fraction(rows: &[ComparisonRow], better: impl Fn(&ComparisonRow) -> bool) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().filter(|r| better(r)).count() as f64 / rows.len() as f64
}
