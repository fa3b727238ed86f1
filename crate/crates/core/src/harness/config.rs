use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::converter::{ConverterSpec, LoadStep};
use crate::error::{Error, Result};
use crate::priors::{Prior, PriorCorrectionConfig, PriorSet};
use crate::sensitivity::DEFAULT_CANDIDATES;
use crate::smc::EngineConfig;

/// Default priors for the eight critical parameters: uniform over a wide
/// range, and a Gaussian for the source resistance.
pub fn default_prior(name: &str) -> Option<Prior> {
    let u = |low, high| Some(Prior::Uniform { low, high });
    match name {
        "L" => u(0.0, 1.3e-3),
        "C_2" | "C_in" | "C_1" => u(0.0, 0.01),
        "R_s" => Some(Prior::Gaussian { mean: 0.5, var: 8.0 }),
        "L_s" => u(0.0, 5e-6),
        "R_c1" => u(0.0, 0.5),
        "R_c2" => u(0.0, 1.0),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub converter: ConverterSpec,
    #[serde(default)]
    pub calibration: CalibrationSection,
    #[serde(default)]
    pub scenario: ScenarioSection,
    pub io: IoSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSection {
    pub parameters: Vec<String>,
    /// Priors by parameter name. Parameters without an entry fall back to
    /// [`default_prior`].
    pub priors: BTreeMap<String, Prior>,
    pub engine: EngineConfig,
    pub prior_correction: CorrectionSection,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            parameters: DEFAULT_CANDIDATES.iter().map(|s| s.to_string()).collect(),
            priors: BTreeMap::new(),
            engine: EngineConfig::default(),
            prior_correction: CorrectionSection::default(),
        }
    }
}

/// Parameters whose prior is unknown. Each one gets a broad uniform pilot
/// and its configured prior is replaced by the fitted Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrectionSection {
    pub parameters: Vec<String>,
    pub n0: usize,
    pub np: usize,
    pub low: f64,
    pub high: f64,
}

impl Default for CorrectionSection {
    fn default() -> Self {
        Self {
            parameters: Vec::new(),
            n0: 200,
            np: 20,
            low: 0.0,
            high: 1e4,
        }
    }
}

impl CorrectionSection {
    pub fn for_parameter(&self, name: &str) -> PriorCorrectionConfig {
        PriorCorrectionConfig {
            n0: self.n0,
            np: self.np,
            broad_prior: Prior::Uniform {
                low: self.low,
                high: self.high,
            },
            target_parameter: name.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    /// Transient load step. Written into the converter when set; giving it
    /// in both places is an error.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub load_step: Option<LoadStep>,
    /// Trailing fraction of the run used as the steady-state window.
    pub steady_state_fraction: f64,
    /// `[from, to]` in seconds. Defaults to a window around the load step,
    /// or the first half of the run without one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transient_window: Option<[f64; 2]>,
    pub sensitivity_delta: f64,
    pub sensitivity_top_k: usize,
    pub channel_scale: [f64; 2],
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            load_step: None,
            steady_state_fraction: 0.2,
            transient_window: None,
            sensitivity_delta: 0.05,
            sensitivity_top_k: 8,
            channel_scale: [1.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoSection {
    /// Measurement CSV. Relative paths are resolved against the config
    /// file's directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measurements: Option<PathBuf>,
    /// Generate measurements from the converter section instead.
    pub synthetic: bool,
    pub out_dir: PathBuf,
    /// Master seed. Overrides `calibration.engine.seed` when given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Standard deviation of additive Gaussian noise on synthetic data.
    pub noise_sigma: f64,
}

impl Default for IoSection {
    fn default() -> Self {
        Self {
            measurements: None,
            synthetic: false,
            out_dir: PathBuf::from("out"),
            seed: None,
            noise_sigma: 0.0,
        }
    }
}

/// 1-based line of the first occurrence of `needle` in `src`.
fn line_of(src: &str, needle: &str) -> Option<usize> {
    src.lines().position(|l| l.contains(needle)).map(|i| i + 1)
}

fn at_line(src: &str, needle: &str, msg: String) -> Error {
    match line_of(src, needle) {
        Some(line) => Error::Config(format!("line {line}: {msg}")),
        None => Error::Config(msg),
    }
}

impl ExperimentConfig {
    /// Parses TOML text, fills defaults and validates. Error messages name
    /// the offending key and, where it can be located, its line.
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(src).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(step) = cfg.scenario.load_step {
            if cfg.converter.load_step.is_some() {
                return Err(at_line(
                    src,
                    "load_step",
                    "`load_step` given in both [converter] and [scenario]".into(),
                ));
            }
            cfg.converter.load_step = Some(step);
            cfg.scenario.load_step = None;
        }
        if let Some(seed) = cfg.io.seed {
            cfg.calibration.engine.seed = seed;
        }
        cfg.validate_with(Some(src))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(None)
    }

    fn validate_with(&self, src: Option<&str>) -> Result<()> {
        let fail = |needle: &str, msg: String| match src {
            Some(s) => Err(at_line(s, needle, msg)),
            None => Err(Error::Config(msg)),
        };
        if let Err(e) = self.converter.validate() {
            return fail("[converter]", format!("[converter]: {e}"));
        }
        let cal = &self.calibration;
        if cal.parameters.is_empty() {
            return fail("parameters", "`calibration.parameters` is empty".into());
        }
        for (i, p) in cal.parameters.iter().enumerate() {
            if !ConverterSpec::is_parameter(p) {
                return fail(
                    &format!("\"{p}\""),
                    format!("`calibration.parameters` names unknown parameter `{p}`"),
                );
            }
            if cal.parameters[..i].contains(p) {
                return fail(
                    &format!("\"{p}\""),
                    format!("`calibration.parameters` lists `{p}` twice"),
                );
            }
        }
        for (name, prior) in &cal.priors {
            if !cal.parameters.contains(name) {
                return fail(
                    name,
                    format!("`calibration.priors.{name}` is not a calibrated parameter"),
                );
            }
            if let Err(e) = prior.validate(name) {
                return fail(name, format!("`calibration.priors.{name}`: {e}"));
            }
        }
        for p in &cal.prior_correction.parameters {
            if !cal.parameters.contains(p) {
                return fail(
                    &format!("\"{p}\""),
                    format!("`calibration.prior_correction.parameters` names `{p}`, which is not calibrated"),
                );
            }
            if let Err(e) = cal.prior_correction.for_parameter(p).validate() {
                return fail("prior_correction", format!("`calibration.prior_correction`: {e}"));
            }
        }
        if let Err(e) = cal.engine.validate() {
            return fail("engine", format!("`calibration.engine`: {e}"));
        }
        for p in &cal.parameters {
            if !cal.priors.contains_key(p)
                && default_prior(p).is_none()
                && !cal.prior_correction.parameters.contains(p)
            {
                return fail(
                    &format!("\"{p}\""),
                    format!("no prior for `{p}`: add `calibration.priors.{p}`"),
                );
            }
        }

        let sc = &self.scenario;
        if !(sc.steady_state_fraction > 0.0 && sc.steady_state_fraction <= 1.0) {
            return fail(
                "steady_state_fraction",
                format!("`scenario.steady_state_fraction` = {} must lie in (0, 1]", sc.steady_state_fraction),
            );
        }
        if let Some([a, b]) = sc.transient_window {
            if !(a < b) {
                return fail("transient_window", "`scenario.transient_window` needs from < to".into());
            }
        }
        if !(sc.sensitivity_delta > 0.0 && sc.sensitivity_delta < 1.0) {
            return fail("sensitivity_delta", "`scenario.sensitivity_delta` must lie in (0, 1)".into());
        }
        if sc.sensitivity_top_k == 0 {
            return fail("sensitivity_top_k", "`scenario.sensitivity_top_k` must be positive".into());
        }

        let io = &self.io;
        match (&io.measurements, io.synthetic) {
            (Some(_), true) => {
                return fail(
                    "synthetic",
                    "[io]: give either `measurements` or `synthetic = true`, not both".into(),
                )
            }
            (None, false) => {
                return fail(
                    "[io]",
                    "[io]: one of `measurements` or `synthetic = true` is required".into(),
                )
            }
            _ => {}
        }
        if !(io.noise_sigma >= 0.0 && io.noise_sigma.is_finite()) {
            return fail("noise_sigma", "`io.noise_sigma` must be >= 0".into());
        }
        Ok(())
    }

    /// Prior set over the calibrated parameters, in parameter order.
    /// Parameters marked for correction keep their configured (or default)
    /// prior here; correction replaces it later.
    pub fn prior_set(&self) -> Result<PriorSet> {
        let cal = &self.calibration;
        let entries = cal
            .parameters
            .iter()
            .map(|p| {
                let prior = cal
                    .priors
                    .get(p)
                    .copied()
                    .or_else(|| default_prior(p))
                    .unwrap_or(Prior::Uniform {
                        low: cal.prior_correction.low,
                        high: cal.prior_correction.high,
                    });
                (p.clone(), prior)
            })
            .collect::<Vec<_>>();
        PriorSet::new(entries)
    }

    pub fn seed(&self) -> u64 {
        self.calibration.engine.seed
    }

    /// Overrides the master seed everywhere it is used.
    pub fn set_seed(&mut self, seed: u64) {
        self.io.seed = Some(seed);
        self.calibration.engine.seed = seed;
    }

    pub fn transient_window(&self) -> [f64; 2] {
        if let Some(w) = self.scenario.transient_window {
            return w;
        }
        let t_end = self.converter.t_end;
        match self.converter.load_step {
            Some(step) if step.time < t_end => [
                (step.time - 0.1 * t_end).max(0.0),
                (step.time + 0.3 * t_end).min(t_end),
            ],
            _ => [0.0, 0.5 * t_end],
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Reads and validates a config file. A relative measurement path is made
/// relative to the file's directory.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let src = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::from_toml_str(&src)
        .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_prefix(e))))?;
    if let Some(m) = &cfg.io.measurements {
        if m.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.io.measurements = Some(dir.join(m));
            }
        }
    }
    Ok(cfg)
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

/// Writes the effective config (defaults filled in) to
/// `<out_dir>/config.toml`.
pub fn echo_config(cfg: &ExperimentConfig, out_dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml_string()?)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[converter]\n\n[io]\nsynthetic = true\n";

    #[test]
    fn minimal_gets_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let e = &cfg.calibration.engine;
        assert_eq!((e.n_particles, e.t_max, e.q, e.beta), (1000, 10, 0.75, 0.4));
        assert_eq!(cfg.calibration.parameters.len(), 8);
        assert_eq!(cfg.converter, ConverterSpec::default());
        let priors = cfg.prior_set().unwrap();
        assert_eq!(priors.get("C_2"), Some(&Prior::Uniform { low: 0.0, high: 0.01 }));
    }

    #[test]
    fn unknown_parameter_named_with_line() {
        let src = "[converter]\n[calibration]\nparameters = [\"L\", \"R_x\"]\n[io]\nsynthetic = true\n";
        let msg = ExperimentConfig::from_toml_str(src).unwrap_err().to_string();
        assert!(msg.contains("R_x"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn unknown_key_named() {
        let src = "[converter]\nV_inn = 5\n[io]\nsynthetic = true\n";
        let msg = ExperimentConfig::from_toml_str(src).unwrap_err().to_string();
        assert!(msg.contains("V_inn"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn missing_section() {
        let msg = ExperimentConfig::from_toml_str("[converter]\n").unwrap_err().to_string();
        assert!(msg.contains("io"), "{msg}");
    }

    #[test]
    fn io_source_exclusive() {
        let both = "[converter]\n[io]\nsynthetic = true\nmeasurements = \"m.csv\"\n";
        assert!(ExperimentConfig::from_toml_str(both).is_err());
        let neither = "[converter]\n[io]\n";
        assert!(ExperimentConfig::from_toml_str(neither).is_err());
    }

    #[test]
    fn round_trip() {
        let src = "[converter]\nD = 0.4\n[calibration]\nparameters = [\"L\", \"R_s\"]\n\
                   [calibration.priors.L]\nkind = \"uniform\"\nlow = 1e-6\nhigh = 1e-4\n\
                   [calibration.engine]\nN = 50\nseed = 3\n[scenario]\nload_step = { time = 1e-3, R_load = 6.6 }\n\
                   [io]\nsynthetic = true\n";
        let cfg = ExperimentConfig::from_toml_str(src).unwrap();
        assert_eq!(cfg.converter.load_step.unwrap().r_load, 6.6);
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn io_seed_overrides_engine() {
        let src = "[converter]\n[calibration.engine]\nseed = 3\n[io]\nsynthetic = true\nseed = 9\n";
        assert_eq!(ExperimentConfig::from_toml_str(src).unwrap().seed(), 9);
    }

    #[test]
    fn prior_for_non_calibrated_rejected() {
        let src = "[converter]\n[calibration]\nparameters = [\"L\"]\n\
                   [calibration.priors.C_1]\nkind = \"uniform\"\nlow = 0\nhigh = 1\n[io]\nsynthetic = true\n";
        let msg = ExperimentConfig::from_toml_str(src).unwrap_err().to_string();
        assert!(msg.contains("C_1"), "{msg}");
    }
}
