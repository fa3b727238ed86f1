use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::csvio::{load_waveform, save_waveform, write_overlay};
use crate::converter::{ConverterSpec, Simulator, Waveform};
use crate::error::{Error, Result};
use crate::priors::{correct_prior, CorrectionResult, ParameterVector, Prior, PriorSet};
use crate::sensitivity::{rank_parameters, SensitivityConfig, SensitivityReport};
use crate::smc::{
    compare_weight_schemes, smc_run_with, win_fraction, ComparisonRow, ConverterModel, StopReason,
    FORMAT_VERSION,
};

/// RNG stream reserved for measurement noise, disjoint from the engine's
/// per-candidate streams.
const NOISE_STREAM: u64 = 1 << 63;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    #[derive(Serialize)]
    struct Versioned<'a, T> {
        format_version: u32,
        #[serde(flatten)]
        body: &'a T,
    }
    let text = serde_json::to_string_pretty(&Versioned {
        format_version: FORMAT_VERSION,
        body: value,
    })?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn write_fitted(out_dir: &Path, corrections: &[CorrectionResult]) -> Result<()> {
    #[derive(Serialize)]
    struct Fitted<'a> {
        corrections: &'a [CorrectionResult],
        priors: Vec<(&'a str, Prior)>,
    }
    let priors = corrections.iter().map(|c| (c.parameter.as_str(), c.prior())).collect();
    write_json(&out_dir.join("fitted_priors.json"), &Fitted { corrections, priors })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    /// Calibrated parameters at their generating values.
    pub parameters: ParameterVector,
    pub converter: ConverterSpec,
    pub noise_sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub measurements: Waveform,
    pub truth: TruthRecord,
    pub csv_path: PathBuf,
    pub truth_path: PathBuf,
}

/// Simulates the converter section and adds optional Gaussian noise.
pub fn synthesize(cfg: &ExperimentConfig) -> Result<Waveform> {
    let mut w = Simulator::new(&cfg.converter)?.run()?;
    if w.is_empty() {
        return Err(Error::EmptyWaveform);
    }
    let sigma = cfg.io.noise_sigma;
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed());
        rng.set_stream(NOISE_STREAM);
        for k in 0..w.len() {
            w.v_out[k] += normal.sample(&mut rng);
            w.i_out[k] += normal.sample(&mut rng);
        }
    }
    Ok(w)
}

/// Writes `measurements.csv` and `truth.json` into `out_dir`.
pub fn generate_synthetic(cfg: &ExperimentConfig, out_dir: &Path) -> Result<SyntheticData> {
    let measurements = synthesize(cfg)?;
    let truth = TruthRecord {
        parameters: ParameterVector::from_spec(&cfg.converter, &cfg.calibration.parameters)?,
        converter: cfg.converter.clone(),
        noise_sigma: cfg.io.noise_sigma,
        seed: cfg.seed(),
    };
    std::fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join("measurements.csv");
    let truth_path = out_dir.join("truth.json");
    save_waveform(&measurements, &csv_path)?;
    write_json(&truth_path, &truth)?;
    Ok(SyntheticData {
        measurements,
        truth,
        csv_path,
        truth_path,
    })
}

/// Measurements for a run, plus the truth when they are synthetic.
pub fn acquire_measurements(
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<(Waveform, Option<ParameterVector>)> {
    match &cfg.io.measurements {
        Some(path) => Ok((load_waveform(path)?, None)),
        None => {
            let data = generate_synthetic(cfg, out_dir)?;
            Ok((data.measurements, Some(data.truth.parameters)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterReport {
    pub name: String,
    pub unit: String,
    pub truth: Option<f64>,
    pub prior: Prior,
    pub posterior_mean: f64,
    pub posterior_std: f64,
    /// `100 |mean - truth| / truth`, when the truth is known.
    pub percent_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub iteration: usize,
    pub epsilon: f64,
    pub acceptance_rate: f64,
    pub n_sims: usize,
    pub wall_time_s: f64,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub parameters: Vec<ParameterReport>,
    pub generations: Vec<GenerationReport>,
    pub corrections: Vec<CorrectionResult>,
    pub pilot_sims: usize,
    pub total_sims: usize,
    pub stop_reason: StopReason,
    /// The final population is incomplete.
    pub partial: bool,
    pub seed: u64,
    pub wall_time_s: f64,
}

impl CalibrationReport {
    pub fn posterior_mean(&self) -> Result<ParameterVector> {
        ParameterVector::from_pairs(self.parameters.iter().map(|p| (p.name.as_str(), p.posterior_mean)))
    }

    pub fn max_percent_error(&self) -> Option<f64> {
        self.parameters
            .iter()
            .map(|p| p.percent_error)
            .collect::<Option<Vec<_>>>()
            .map(|v| v.into_iter().fold(0.0, f64::max))
    }
}

pub fn percent_error(estimate: f64, truth: f64) -> f64 {
    100.0 * (estimate - truth).abs() / truth
}

/// Replaces the prior of every parameter listed for correction with the
/// Gaussian fitted by a broad uniform pilot. During the pilot the other
/// calibrated parameters sit at their prior means.
pub fn corrected_priors(
    cfg: &ExperimentConfig,
    measurements: &Waveform,
) -> Result<(PriorSet, Vec<CorrectionResult>)> {
    let mut priors = cfg.prior_set()?;
    let mut results = Vec::new();
    let section = &cfg.calibration.prior_correction;
    for (i, name) in section.parameters.iter().enumerate() {
        let means = priors.means();
        let fixed = ParameterVector::from_pairs(
            priors
                .names()
                .zip(means)
                .filter(|(p, _)| p != name),
        )?;
        let seed = cfg.seed().wrapping_add(1_000_003 * (i as u64 + 1));
        let res = correct_prior(&section.for_parameter(name), &cfg.converter, &fixed, measurements, seed)?;
        priors.replace(name, res.prior())?;
        results.push(res);
    }
    Ok((priors, results))
}

/// Runs prior correction and the sampler, then writes the report,
/// population snapshots and before/after waveforms into `out_dir`.
pub fn run_calibration(cfg: &ExperimentConfig, out_dir: &Path) -> Result<CalibrationReport> {
    let start = Instant::now();
    std::fs::create_dir_all(out_dir)?;
    let (measurements, truth) = acquire_measurements(cfg, out_dir)?;
    let (priors, corrections) = corrected_priors(cfg, &measurements)?;
    if !corrections.is_empty() {
        write_fitted(out_dir, &corrections)?;
    }

    let names: Vec<String> = priors.names().map(str::to_string).collect();
    let model = ConverterModel::new(cfg.converter.clone(), names.clone(), measurements.clone())?;
    let res = smc_run_with(&cfg.calibration.engine, &priors, &model, |_| {})?;

    let pop_dir = out_dir.join("populations");
    std::fs::create_dir_all(&pop_dir)?;
    for p in &res.populations {
        std::fs::write(pop_dir.join(format!("generation_{:02}.json", p.iteration)), p.to_json()?)?;
    }

    let last = res.final_population();
    let means = last.weighted_mean();
    let stds = last.weighted_std();
    let parameters = names
        .iter()
        .zip(priors.entries())
        .enumerate()
        .map(|(i, (name, (_, prior)))| {
            let t = truth.as_ref().and_then(|v| v.get(name));
            ParameterReport {
                name: name.clone(),
                unit: crate::converter::unit_of(name).to_string(),
                truth: t,
                prior: *prior,
                posterior_mean: means[i],
                posterior_std: stds[i],
                percent_error: t.map(|t| percent_error(means[i], t)),
            }
        })
        .collect();
    let generations = res
        .populations
        .iter()
        .map(|p| GenerationReport {
            iteration: p.iteration,
            epsilon: p.epsilon_used,
            acceptance_rate: p.diagnostics.acceptance_rate,
            n_sims: p.diagnostics.n_sims,
            wall_time_s: p.diagnostics.wall_time_s,
            truncated: p.diagnostics.truncated,
        })
        .collect();

    write_before_after(cfg, &model, &priors.means(), &means, &measurements, out_dir)?;

    let report = CalibrationReport {
        parameters,
        generations,
        corrections,
        pilot_sims: res.pilot_sims,
        total_sims: res.total_sims(),
        stop_reason: res.stop_reason,
        partial: res.truncated,
        seed: cfg.seed(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    write_json(&out_dir.join("report.json"), &report)?;
    Ok(report)
}

/// `transient.csv` and `steady_state.csv`: measurements against the
/// prior-mean ("before") and posterior-mean ("after") simulations. A
/// prior mean that cannot be simulated is left out.
fn write_before_after(
    cfg: &ExperimentConfig,
    model: &ConverterModel,
    prior_means: &[f64],
    posterior_means: &[f64],
    measurements: &Waveform,
    out_dir: &Path,
) -> Result<()> {
    let before = match model.simulate(prior_means) {
        Ok(w) => Some(w),
        Err(Error::Divergence { .. }) => None,
        Err(e) => return Err(e),
    };
    let after = model.simulate(posterior_means)?;
    let mut traces = vec![("measured", measurements.clone())];
    if let Some(b) = before {
        traces.push(("before", b));
    }
    traces.push(("after", after));

    let [from, to] = cfg.transient_window();
    let transient: Vec<(&str, Waveform)> = traces.iter().map(|(l, w)| (*l, w.slice_time(from, to))).collect();
    let steady = traces
        .iter()
        .map(|(l, w)| Ok((*l, w.steady_state_window(cfg.scenario.steady_state_fraction)?)))
        .collect::<Result<Vec<_>>>()?;
    for (file, set) in [("transient.csv", &transient), ("steady_state.csv", &steady)] {
        let refs: Vec<(&str, &Waveform)> = set.iter().map(|(l, w)| (*l, w)).collect();
        write_overlay(&refs, std::fs::File::create(out_dir.join(file))?)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub runs: usize,
    /// Runs where the proposed scheme had the higher generation-2
    /// acceptance rate.
    pub acc_iter2_wins: f64,
    /// Runs where the proposed scheme needed fewer simulations.
    pub total_sims_wins: f64,
    pub mean_acc_iter2_proposed: f64,
    pub mean_acc_iter2_baseline: f64,
    pub mean_total_sims_proposed: f64,
    pub mean_total_sims_baseline: f64,
    pub truncated_runs: usize,
}

impl ComparisonSummary {
    pub fn from_rows(rows: &[ComparisonRow]) -> Self {
        let n = rows.len().max(1) as f64;
        let mean = |f: &dyn Fn(&ComparisonRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        Self {
            runs: rows.len(),
            acc_iter2_wins: win_fraction(rows, |r| {
                r.proposed.acc_iter2.unwrap_or(0.0) > r.baseline.acc_iter2.unwrap_or(0.0)
            }),
            total_sims_wins: win_fraction(rows, |r| r.proposed.total_sims < r.baseline.total_sims),
            mean_acc_iter2_proposed: mean(&|r| r.proposed.acc_iter2.unwrap_or(f64::NAN)),
            mean_acc_iter2_baseline: mean(&|r| r.baseline.acc_iter2.unwrap_or(f64::NAN)),
            mean_total_sims_proposed: mean(&|r| r.proposed.total_sims as f64),
            mean_total_sims_baseline: mean(&|r| r.baseline.total_sims as f64),
            truncated_runs: rows
                .iter()
                .filter(|r| r.proposed.truncated || r.baseline.truncated)
                .count(),
        }
    }
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Csv {
        line: 0,
        reason: e.to_string(),
    };
    wtr.write_record([
        "run",
        "seed",
        "acc_iter2_proposed",
        "acc_iter2_baseline",
        "acc_overall_proposed",
        "acc_overall_baseline",
        "total_sims_proposed",
        "total_sims_baseline",
        "truncated_proposed",
        "truncated_baseline",
    ])
    .map_err(csv_err)?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        wtr.write_record([
            r.run.to_string(),
            r.seed.to_string(),
            opt(r.proposed.acc_iter2),
            opt(r.baseline.acc_iter2),
            r.proposed.acc_overall.to_string(),
            r.baseline.acc_overall.to_string(),
            r.proposed.total_sims.to_string(),
            r.baseline.total_sims.to_string(),
            r.proposed.truncated.to_string(),
            r.baseline.truncated.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Paired runs of both weighting schemes on shared measurements. Writes
/// `compare_weights.csv` and `compare_weights_summary.json`.
pub fn run_weight_comparison(
    cfg: &ExperimentConfig,
    runs: usize,
    out_dir: &Path,
) -> Result<(Vec<ComparisonRow>, ComparisonSummary)> {
    if runs < 2 {
        return Err(Error::InvalidArgument(format!(
            "weight comparison needs at least 2 runs, got {runs}"
        )));
    }
    std::fs::create_dir_all(out_dir)?;
    let (measurements, _) = acquire_measurements(cfg, out_dir)?;
    let (priors, _) = corrected_priors(cfg, &measurements)?;
    let model = ConverterModel::new(
        cfg.converter.clone(),
        priors.names().map(str::to_string).collect(),
        measurements,
    )?;
    let rows = compare_weight_schemes(&cfg.calibration.engine, &priors, &model, runs)?;
    let summary = ComparisonSummary::from_rows(&rows);
    std::fs::write(out_dir.join("compare_weights.csv"), comparison_csv(&rows)?)?;
    write_json(&out_dir.join("compare_weights_summary.json"), &summary)?;
    Ok((rows, summary))
}

/// Ranks the calibrated parameters on the converter section and writes
/// `sensitivity.csv`.
pub fn run_sensitivity(cfg: &ExperimentConfig, out_dir: &Path) -> Result<SensitivityReport> {
    let sc = &cfg.scenario;
    let names: Vec<&str> = cfg.calibration.parameters.iter().map(String::as_str).collect();
    let mut scfg = SensitivityConfig::new(cfg.converter.clone(), &names);
    scfg.relative_perturbation = sc.sensitivity_delta;
    scfg.channel_scale = (sc.channel_scale[0], sc.channel_scale[1]);
    let mut report = rank_parameters(&scfg)?;
    report.entries.truncate(sc.sensitivity_top_k);
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("sensitivity.csv"), report.to_csv())?;
    Ok(report)
}

/// Runs the prior correction alone and writes `fitted_priors.json`.
pub fn run_prior_correction(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<CorrectionResult>> {
    if cfg.calibration.prior_correction.parameters.is_empty() {
        return Err(Error::Config(
            "`calibration.prior_correction.parameters` is empty".into(),
        ));
    }
    std::fs::create_dir_all(out_dir)?;
    let (measurements, _) = acquire_measurements(cfg, out_dir)?;
    let (_, results) = corrected_priors(cfg, &measurements)?;
    write_fitted(out_dir, &results)?;
    Ok(results)
}

/// Simulates the converter section and writes `waveform.csv`.
pub fn run_simulate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Waveform> {
    let w = Simulator::new(&cfg.converter)?.run()?;
    if w.is_empty() {
        return Err(Error::EmptyWaveform);
    }
    std::fs::create_dir_all(out_dir)?;
    save_waveform(&w, &out_dir.join("waveform.csv"))?;
    Ok(w)
}
