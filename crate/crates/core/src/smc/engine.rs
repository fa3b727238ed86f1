//! Adaptive ABC-SMC sampler.
//!
//! A pilot of `2N` prior draws sets the first tolerance at its median, and
//! generation 1 keeps the first `N` pilot draws within it. If more than half
//! of the pilot diverged, generation 1 falls back to fresh prior rejection
//! sampling.
//! Every later generation resamples a parent by weight, perturbs it with
//! the Gaussian kernel fitted to the previous population, drops candidates
//! outside the prior support, simulates the rest and accepts those within
//! the current tolerance.
//!
//! Candidate `j` of generation `t` draws all its randomness from its own
//! ChaCha stream, and acceptance is accounted in candidate order. Results
//! are therefore identical for any number of worker threads.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::distance::distance;
use super::kernel::PerturbationKernel;
use super::population::{GenerationDiagnostics, Particle, Population};
use super::threshold::{init_threshold, next_threshold, ThresholdSchedule};
use super::weights::{adaptive_weight, baseline_weight, initial_weights, normalize, RHO_FLOOR};
use crate::converter::{ConverterSpec, Simulator, Waveform};
use crate::error::{Error, Result};
use crate::priors::PriorSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    /// Reciprocal discrepancy in generation 1, prior/discrepancy mix after.
    Proposed,
    /// Uniform in generation 1, importance weights after.
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    /// Particles per generation (`N`).
    #[serde(rename = "N")]
    pub n_particles: usize,
    /// Maximum number of generations (`T`).
    #[serde(rename = "T")]
    pub t_max: usize,
    pub q: f64,
    pub beta: f64,
    pub epsilon_min: f64,
    pub weight_scheme: WeightScheme,
    pub seed: u64,
    /// Per-generation simulation budget, as a multiple of `N`.
    pub budget_factor: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            n_particles: 1000,
            t_max: 10,
            q: 0.75,
            beta: 0.4,
            epsilon_min: 0.0,
            weight_scheme: WeightScheme::Proposed,
            seed: 0,
            budget_factor: 500,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_particles < 2 {
            return bad(format!("N = {} must be at least 2", self.n_particles));
        }
        if self.t_max < 1 {
            return bad("T must be at least 1".into());
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return bad(format!("q = {} must lie in (0, 1)", self.q));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta = {} must lie in [0, 1]", self.beta));
        }
        if self.epsilon_min.is_nan() || self.epsilon_min < 0.0 {
            return bad("epsilon_min must be >= 0".into());
        }
        if self.budget_factor == 0 {
            return bad("budget_factor must be positive".into());
        }
        Ok(())
    }
}

/// Anything that maps a parameter vector to a discrepancy against fixed
/// data. A `Divergence` error rejects the candidate; other errors abort the
/// run.
pub trait Model: Sync {
    fn discrepancy(&self, params: &[f64]) -> Result<f64>;
}

impl<F> Model for F
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    fn discrepancy(&self, params: &[f64]) -> Result<f64> {
        self(params)
    }
}

/// The buck converter scored against measured waveforms.
#[derive(Debug, Clone)]
pub struct ConverterModel {
    pub spec: ConverterSpec,
    pub names: Vec<String>,
    pub measurements: Waveform,
}

impl ConverterModel {
    pub fn new(spec: ConverterSpec, names: Vec<String>, measurements: Waveform) -> Result<Self> {
        for n in &names {
            if !ConverterSpec::is_parameter(n) {
                return Err(Error::UnknownParameter(n.clone()));
            }
        }
        spec.validate()?;
        let k = spec.sample_count();
        if k != measurements.len() {
            return Err(Error::GridMismatch(format!(
                "model produces {k} samples, measurements have {}",
                measurements.len()
            )));
        }
        Ok(Self {
            spec,
            names,
            measurements,
        })
    }

    pub fn simulate(&self, params: &[f64]) -> Result<Waveform> {
        let mut spec = self.spec.clone();
        for (n, &v) in self.names.iter().zip(params) {
            spec.set(n, v)?;
        }
        let sim = Simulator::new(&spec).map_err(|e| match e {
            // Values outside the physical domain are rejected like blow-ups.
            Error::InvalidSpec(_) | Error::DegenerateTopology(_) => Error::Divergence {
                time: 0.0,
                params: self.names.iter().cloned().zip(params.iter().copied()).collect(),
            },
            other => other,
        })?;
        sim.run().map_err(|e| match e {
            Error::Divergence { time, .. } => Error::Divergence {
                time,
                params: self.names.iter().cloned().zip(params.iter().copied()).collect(),
            },
            other => other,
        })
    }
}

impl Model for ConverterModel {
    fn discrepancy(&self, params: &[f64]) -> Result<f64> {
        distance(&self.simulate(params)?, &self.measurements)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    EpsilonMin,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmcResult {
    pub populations: Vec<Population>,
    pub schedule: ThresholdSchedule,
    /// Pilot simulations not already counted in generation 1.
    pub pilot_sims: usize,
    pub stop_reason: StopReason,
    /// The last population is partial (budget ran out before `N`
    /// acceptances).
    pub truncated: bool,
}

impl SmcResult {
    pub fn final_population(&self) -> &Population {
        self.populations.last().expect("at least one population")
    }

    /// Total simulations including the pilot.
    pub fn total_sims(&self) -> usize {
        self.pilot_sims
            + self
                .populations
                .iter()
                .map(|p| p.diagnostics.n_sims)
                .sum::<usize>()
    }

    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.populations
            .iter()
            .map(|p| p.diagnostics.acceptance_rate)
            .collect()
    }
}

/// Runs the sampler on the converter model.
pub fn smc_run(
    cfg: &EngineConfig,
    priors: &PriorSet,
    measurements: &Waveform,
    spec: &ConverterSpec,
) -> Result<SmcResult> {
    let model = ConverterModel::new(
        spec.clone(),
        priors.names().map(str::to_string).collect(),
        measurements.clone(),
    )?;
    smc_run_with(cfg, priors, &model, |_| {})
}

/// Runs the sampler on any [`Model`]; `observer` sees every finished
/// population.
pub fn smc_run_with<M: Model + ?Sized>(
    cfg: &EngineConfig,
    priors: &PriorSet,
    model: &M,
    mut observer: impl FnMut(&Population),
) -> Result<SmcResult> {
    cfg.validate()?;
    let n = cfg.n_particles;
    let names: Vec<String> = priors.names().map(str::to_string).collect();
    let mut schedule = ThresholdSchedule {
        epsilons: Vec::new(),
        q: cfg.q,
        epsilon_min: cfg.epsilon_min,
        t_max: cfg.t_max,
        k_ini: 2 * n,
    };

    // Pilot: 2N prior draws set the first tolerance at their median.
    let pilot: Vec<Vec<f64>> = (0..2 * n)
        .map(|j| priors.sample_values(&mut candidate_rng(cfg.seed, 0, j)))
        .collect();
    let pilot_rhos: Vec<Option<f64>> = crate::parallel::map(&pilot, |x| evaluate(model, x))
        .into_iter()
        .collect::<Result<_>>()?;
    let pilot_scores: Vec<f64> = pilot_rhos.iter().map(|r| r.unwrap_or(f64::INFINITY)).collect();
    let mut epsilon = init_threshold(&pilot_scores)?.max(cfg.epsilon_min);
    let mut pilot_sims = pilot_rhos.len();

    let mut populations: Vec<Population> = Vec::new();
    let mut kernel: Option<PerturbationKernel> = None;
    let mut prev_rate = 0.5;
    let mut stop_reason = StopReason::MaxIterations;
    let mut truncated = false;

    for t in 1..=cfg.t_max {
        schedule.epsilons.push(epsilon);
        let started = Clock::now();
        let prev = populations.last();
        let proposer = Proposer {
            priors,
            seed: cfg.seed,
            generation: t,
            parents: prev.map(|p| (p.values(), cumulative(&p.weights()))),
            kernel: kernel.as_ref(),
        };
        let from_pilot = if t == 1 {
            accept_from_pilot(priors, &pilot, &pilot_rhos, epsilon, n)
        } else {
            None
        };
        let outcome = match from_pilot {
            Some(o) => {
                pilot_sims -= o.diag.n_sims;
                o
            }
            None => run_generation(cfg, model, &proposer, epsilon, prev_rate)?,
        };

        // Weights.
        let mut diag = outcome.diag;
        diag.seed = cfg.seed;
        let mut particles = Vec::with_capacity(outcome.accepted.len());
        for cand in outcome.accepted {
            if cand.rho < RHO_FLOOR {
                diag.n_clamped_rho += 1;
            }
            let w = match (cfg.weight_scheme, prev) {
                (WeightScheme::Proposed, None) => 1.0,
                (WeightScheme::Baseline, None) => 1.0,
                (WeightScheme::Proposed, Some(_)) => {
                    adaptive_weight(cand.prior_density, cand.rho, cfg.beta)
                }
                (WeightScheme::Baseline, Some(p)) => {
                    let k = kernel.as_ref().expect("kernel exists after generation 1");
                    match baseline_weight(
                        cand.prior_density,
                        &proposer.parents.as_ref().expect("parents").0,
                        &p.weights(),
                        &cand.params,
                        k,
                    ) {
                        Some(w) => w,
                        None => {
                            diag.n_unreachable += 1;
                            continue;
                        }
                    }
                }
            };
            particles.push(Particle {
                params: cand.params,
                discrepancy: cand.rho,
                weight: w,
            });
        }
        if prev.is_none() && cfg.weight_scheme == WeightScheme::Proposed && !particles.is_empty() {
            let rhos: Vec<f64> = particles.iter().map(|p| p.discrepancy).collect();
            for (p, w) in particles.iter_mut().zip(initial_weights(&rhos)?) {
                p.weight = w;
            }
        } else if !particles.is_empty() {
            let mut w: Vec<f64> = particles.iter().map(|p| p.weight).collect();
            normalize(&mut w)?;
            for (p, w) in particles.iter_mut().zip(w) {
                p.weight = w;
            }
        }

        let accepted = particles.len();
        diag.acceptance_rate = if diag.n_sims > 0 {
            accepted as f64 / diag.n_sims as f64
        } else {
            0.0
        };
        prev_rate = (accepted as f64 / diag.n_proposals.max(1) as f64).max(1e-4);
        let partial = accepted < n;
        diag.truncated = partial;

        if particles.is_empty() {
            truncated = true;
            stop_reason = StopReason::BudgetExhausted;
            break;
        }

        let values: Vec<Vec<f64>> = particles.iter().map(|p| p.params.clone()).collect();
        let weights: Vec<f64> = particles.iter().map(|p| p.weight).collect();
        let fitted = if values.len() >= 2 {
            Some(PerturbationKernel::fit(&values, &weights)?)
        } else {
            None
        };
        diag.kernel_regularized = fitted.as_ref().is_some_and(|k| k.was_regularized());
        let kernel_cov = fitted
            .as_ref()
            .map(|k| {
                let g = k.gamma();
                (0..g.nrows())
                    .map(|i| (0..g.ncols()).map(|j| g[(i, j)]).collect())
                    .collect()
            })
            .unwrap_or_else(|| vec![vec![0.0; names.len()]; names.len()]);
        diag.wall_time_s = started.elapsed();

        let rhos: Vec<f64> = particles.iter().map(|p| p.discrepancy).collect();
        let pop = Population {
            iteration: t,
            names: names.clone(),
            particles,
            epsilon_used: epsilon,
            kernel_cov,
            diagnostics: diag,
        };
        observer(&pop);
        populations.push(pop);

        if partial {
            truncated = true;
            stop_reason = StopReason::BudgetExhausted;
            break;
        }
        if t == cfg.t_max {
            break;
        }
        let next = next_threshold(&rhos, cfg.q, epsilon)?;
        if next < cfg.epsilon_min {
            stop_reason = StopReason::EpsilonMin;
            break;
        }
        epsilon = next;
        kernel = fitted;
    }

    if populations.is_empty() {
        return Err(Error::InvalidArgument(
            "no particle accepted in the first generation within the simulation budget".into(),
        ));
    }
    Ok(SmcResult {
        populations,
        schedule,
        pilot_sims,
        stop_reason,
        truncated,
    })
}

/// Independent random stream for candidate `j` of generation `t`
/// (generation 0 is the pilot).
fn candidate_rng(seed: u64, generation: usize, j: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((generation as u64) << 40) | j as u64);
    rng
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

/// Discrepancy of one candidate; `Ok(None)` when the simulation diverged.
fn evaluate<M: Model + ?Sized>(model: &M, x: &[f64]) -> Result<Option<f64>> {
    match model.discrepancy(x) {
        Ok(r) if r.is_nan() => Ok(None),
        Ok(r) => Ok(Some(r)),
        Err(Error::Divergence { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

struct Proposer<'a> {
    priors: &'a PriorSet,
    seed: u64,
    generation: usize,
    /// Previous particles and their cumulative weights.
    parents: Option<(Vec<Vec<f64>>, Vec<f64>)>,
    kernel: Option<&'a PerturbationKernel>,
}

struct Candidate {
    params: Vec<f64>,
    prior_density: f64,
    rho: f64,
}

impl Proposer<'_> {
    /// Candidate `j`, or `None` if it falls outside the prior support.
    fn propose(&self, j: usize) -> Option<(Vec<f64>, f64)> {
        let mut rng = candidate_rng(self.seed, self.generation, j);
        let x = match (&self.parents, self.kernel) {
            (Some((parents, cum)), Some(kernel)) => {
                let total = *cum.last().expect("non-empty population");
                let u: f64 = rng.random::<f64>() * total;
                let i = cum.partition_point(|&c| c <= u).min(parents.len() - 1);
                kernel.perturb(&parents[i], &mut rng)
            }
            _ => self.priors.sample_values(&mut rng),
        };
        let density = self.priors.density_values(&x);
        (density > 0.0).then_some((x, density))
    }
}

struct GenerationOutcome {
    accepted: Vec<Candidate>,
    diag: GenerationDiagnostics,
}

fn run_generation<M: Model + ?Sized>(
    cfg: &EngineConfig,
    model: &M,
    proposer: &Proposer<'_>,
    epsilon: f64,
    prev_rate: f64,
) -> Result<GenerationOutcome> {
    let n = cfg.n_particles;
    let sim_budget = cfg.budget_factor * n;
    let proposal_budget = sim_budget.saturating_mul(100);
    let min_batch = worker_count();
    let mut diag = GenerationDiagnostics::default();
    let mut accepted: Vec<Candidate> = Vec::with_capacity(n);
    let mut next_j = 0usize;

    'outer: while accepted.len() < n {
        let rate = if diag.n_proposals > 0 && !accepted.is_empty() {
            accepted.len() as f64 / diag.n_proposals as f64
        } else {
            prev_rate
        };
        let remaining = n - accepted.len();
        let batch = ((remaining as f64 / rate).ceil() as usize).clamp(min_batch, 8192);
        let indices: Vec<usize> = (next_j..next_j + batch).collect();
        next_j += batch;

        let results = crate::parallel::map(&indices, |&j| -> Result<_> {
            match proposer.propose(j) {
                None => Ok(None),
                Some((x, dens)) => {
                    let rho = evaluate(model, &x)?;
                    Ok(Some((x, dens, rho)))
                }
            }
        });

        // Sequential accounting in candidate order.
        for r in results {
            if diag.n_sims >= sim_budget || diag.n_proposals >= proposal_budget {
                break 'outer;
            }
            diag.n_proposals += 1;
            match r? {
                None => diag.n_prior_rejected += 1,
                Some((x, dens, rho)) => {
                    diag.n_sims += 1;
                    match rho {
                        None => diag.n_divergent += 1,
                        Some(rho) if rho <= epsilon => {
                            accepted.push(Candidate {
                                params: x,
                                prior_density: dens,
                                rho,
                            });
                            if accepted.len() == n {
                                break 'outer;
                            }
                        }
                        Some(_) => {}
                    }
                }
            }
        }
    }
    Ok(GenerationOutcome { accepted, diag })
}

/// Generation 1 straight from the pilot: draws are examined in candidate
/// order and accepted while within `epsilon`, stopping at the `n`-th
/// acceptance. With `epsilon` at the pilot median at least `n` of the `2n`
/// draws qualify, so the acceptance rate is at least one half. `None` when
/// too many pilot draws diverged.
fn accept_from_pilot(
    priors: &PriorSet,
    pilot: &[Vec<f64>],
    rhos: &[Option<f64>],
    epsilon: f64,
    n: usize,
) -> Option<GenerationOutcome> {
    let mut diag = GenerationDiagnostics::default();
    let mut accepted = Vec::with_capacity(n);
    for (x, rho) in pilot.iter().zip(rhos) {
        diag.n_proposals += 1;
        diag.n_sims += 1;
        match *rho {
            None => diag.n_divergent += 1,
            Some(rho) if rho <= epsilon => {
                accepted.push(Candidate {
                    params: x.clone(),
                    prior_density: priors.density_values(x),
                    rho,
                });
                if accepted.len() == n {
                    return Some(GenerationOutcome { accepted, diag });
                }
            }
            Some(_) => {}
        }
    }
    None
}

fn worker_count() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads().max(1)
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Wall clock that degrades to zero where `Instant` is unavailable.
struct Clock(#[cfg(not(target_arch = "wasm32"))] std::time::Instant);

impl Clock {
    fn now() -> Self {
        Clock(
            #[cfg(not(target_arch = "wasm32"))]
            std::time::Instant::now(),
        )
    }

    fn elapsed(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.0.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}
