use std::path::PathBuf;
use std::process::ExitCode;

use buckcal::harness::{self, ExperimentConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "buckcal", version, about = "Buck converter parameter identification with adaptive ABC-SMC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the converter section and write waveform.csv.
    Simulate(Common),
    /// Rank the calibrated parameters by trajectory sensitivity.
    Sensitivity(Common),
    /// Fit Gaussian priors for the parameters listed under
    /// calibration.prior_correction.
    CorrectPrior(Common),
    /// Run prior correction and the ABC-SMC sampler.
    Calibrate(Common),
    /// Paired runs of the proposed and baseline weighting schemes.
    CompareWeights {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 50)]
        runs: usize,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding io.out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> buckcal::Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = harness::load_config(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.set_seed(seed);
        }
        if let Some(out) = &self.out {
            cfg.io.out_dir = out.clone();
        }
        let out = cfg.io.out_dir.clone();
        harness::echo_config(&cfg, &out)?;
        Ok((cfg, out))
    }
}

fn run(cli: Cli) -> buckcal::Result<()> {
    match cli.command {
        Command::Simulate(c) => {
            let (cfg, out) = c.load()?;
            let w = harness::run_simulate(&cfg, &out)?;
            println!("{} samples written to {}", w.len(), out.join("waveform.csv").display());
            let ss = w.steady_state_window(cfg.scenario.steady_state_fraction)?;
            println!("steady-state mean V_out {:.6} V, ripple {:.3e} V", ss.mean_v_out(), ss.ripple_v_out());
        }
        Command::Sensitivity(c) => {
            let (cfg, out) = c.load()?;
            let report = harness::run_sensitivity(&cfg, &out)?;
            println!("{:<6} {:>12} {:>10}", "name", "raw", "normalized");
            for e in &report.entries {
                println!("{:<6} {:>12.4e} {:>10.4}", e.name, e.raw, e.normalized);
            }
        }
        Command::CorrectPrior(c) => {
            let (cfg, out) = c.load()?;
            for r in harness::run_prior_correction(&cfg, &out)? {
                println!(
                    "{}: N({:.6e}, {:.6e}) from {} probes, best discrepancy {:.3e}",
                    r.parameter, r.mean, r.var, r.n_probes, r.best_discrepancy
                );
            }
        }
        Command::Calibrate(c) => {
            let (cfg, out) = c.load()?;
            let report = harness::run_calibration(&cfg, &out)?;
            for g in &report.generations {
                println!(
                    "generation {:>2}: eps {:.4e}  acc {:.4}  N_s {}",
                    g.iteration, g.epsilon, g.acceptance_rate, g.n_sims
                );
            }
            println!("{:<6} {:>12} {:>12} {:>12} {:>9}", "name", "truth", "mean", "std", "% error");
            for p in &report.parameters {
                let opt = |x: Option<f64>, prec: usize| x.map_or("-".to_string(), |v| format!("{v:.prec$e}"));
                println!(
                    "{:<6} {:>12} {:>12.4e} {:>12.4e} {:>9}",
                    p.name,
                    opt(p.truth, 4),
                    p.posterior_mean,
                    p.posterior_std,
                    p.percent_error.map_or("-".to_string(), |e| format!("{e:.2}")),
                );
            }
            if report.partial {
                println!("partial: the simulation budget ran out in the last generation");
            }
            println!("report written to {}", out.join("report.json").display());
        }
        Command::CompareWeights { common, runs } => {
            let (cfg, out) = common.load()?;
            let (_, s) = harness::run_weight_comparison(&cfg, runs, &out)?;
            println!(
                "{} runs: proposed wins generation-2 acceptance in {:.0}%, total simulations in {:.0}%",
                s.runs,
                100.0 * s.acc_iter2_wins,
                100.0 * s.total_sims_wins
            );
            println!(
                "mean acc(2) {:.4} vs {:.4}; mean N_s {:.0} vs {:.0}",
                s.mean_acc_iter2_proposed,
                s.mean_acc_iter2_baseline,
                s.mean_total_sims_proposed,
                s.mean_total_sims_baseline
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
