//! Trajectory sensitivity ranking.
//!
//! For a parameter `a` perturbed to `a(1 + d)` and `a(1 - d)`:
//!
//! ```text
//! S(a) = sum_k (|V+_k - V-_k| + |I+_k - I-_k|) / (K * 2d)
//! ```
//!
//! Volts and amperes are summed as they are. `channel_scale` can weight the
//! two channels but defaults to `(1, 1)`.

use serde::{Deserialize, Serialize};

use crate::converter::{ConverterSpec, Simulator, Waveform};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityConfig {
    pub relative_perturbation: f64,
    pub parameter_names: Vec<String>,
    pub scenario: ConverterSpec,
    #[serde(default = "unit_scale")]
    pub channel_scale: (f64, f64),
}

fn unit_scale() -> (f64, f64) {
    (1.0, 1.0)
}

/// The eight candidates ranked by default.
pub const DEFAULT_CANDIDATES: [&str; 8] = ["L", "C_2", "R_s", "L_s", "C_in", "R_c1", "R_c2", "C_1"];

impl SensitivityConfig {
    pub fn new(scenario: ConverterSpec, names: &[&str]) -> Self {
        Self {
            relative_perturbation: 0.05,
            parameter_names: names.iter().map(|s| s.to_string()).collect(),
            scenario,
            channel_scale: unit_scale(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.relative_perturbation;
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "relative perturbation {d} must lie in (0, 1)"
            )));
        }
        for n in &self.parameter_names {
            if !ConverterSpec::is_parameter(n) {
                return Err(Error::UnknownParameter(n.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityEntry {
    pub name: String,
    pub raw: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    /// Sorted by normalized sensitivity, descending; ties by name.
    pub entries: Vec<SensitivityEntry>,
    pub k_used: usize,
    /// Every raw sensitivity was zero, so nothing was normalized.
    pub all_zero: bool,
}

impl SensitivityReport {
    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name.as_str()).collect()
    }

    pub fn top(&self, k: usize) -> &[SensitivityEntry] {
        &self.entries[..k.min(self.entries.len())]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,raw,normalized\n");
        for e in &self.entries {
            out.push_str(&format!("{},{:e},{}\n", e.name, e.raw, e.normalized));
        }
        out
    }
}

/// Central-difference sensitivity for an arbitrary trajectory generator
/// `simulate(value)`.
pub fn trajectory_sensitivity_with<F>(
    value: f64,
    delta: f64,
    channel_scale: (f64, f64),
    simulate: F,
) -> Result<(f64, usize)>
where
    F: Fn(f64) -> Result<Waveform>,
{
    if value == 0.0 {
        return Err(Error::InvalidArgument(
            "relative perturbation of a zero-valued parameter".into(),
        ));
    }
    let plus = simulate(value * (1.0 + delta))?;
    let minus = simulate(value * (1.0 - delta))?;
    plus.check_same_grid(&minus)?;
    let k = plus.len();
    if k == 0 {
        return Err(Error::EmptyWaveform);
    }
    let (sv, si) = channel_scale;
    let total: f64 = plus
        .v_out
        .iter()
        .zip(&minus.v_out)
        .zip(plus.i_out.iter().zip(&minus.i_out))
        .map(|((vp, vm), (ip, im))| sv * (vp - vm).abs() + si * (ip - im).abs())
        .sum();
    Ok((total / (k as f64 * 2.0 * delta), k))
}

/// Sensitivity of the converter outputs to one named parameter.
pub fn trajectory_sensitivity(cfg: &SensitivityConfig, name: &str) -> Result<f64> {
    cfg.validate()?;
    let value = cfg.scenario.get(name)?;
    trajectory_sensitivity_with(value, cfg.relative_perturbation, cfg.channel_scale, |v| {
        let mut spec = cfg.scenario.clone();
        spec.set(name, v)?;
        Simulator::new(&spec)?.run()
    })
    .map(|(s, _)| s)
}

/// Ranks every configured parameter by normalized sensitivity.
pub fn rank_parameters(cfg: &SensitivityConfig) -> Result<SensitivityReport> {
    cfg.validate()?;
    if cfg.parameter_names.is_empty() {
        return Err(Error::InvalidArgument("no parameters to rank".into()));
    }
    let raws = crate::parallel::map(&cfg.parameter_names, |n| trajectory_sensitivity(cfg, n))
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    Ok(build_report(
        cfg.parameter_names.clone(),
        raws,
        cfg.scenario.sample_count(),
    ))
}

fn build_report(names: Vec<String>, raws: Vec<f64>, k_used: usize) -> SensitivityReport {
    let max = raws.iter().copied().fold(0.0, f64::max);
    let all_zero = max <= 0.0;
    let mut entries: Vec<SensitivityEntry> = names
        .into_iter()
        .zip(raws)
        .map(|(name, raw)| SensitivityEntry {
            name,
            raw,
            normalized: if all_zero { 0.0 } else { raw / max },
        })
        .collect();
    entries.sort_by(|a, b| {
        b.normalized
            .total_cmp(&a.normalized)
            .then_with(|| a.name.cmp(&b.name))
    });
    SensitivityReport {
        entries,
        k_used,
        all_zero,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short() -> ConverterSpec {
        ConverterSpec {
            t_end: 0.4e-3,
            ..Default::default()
        }
    }

    #[test]
    fn removed_branch_esr_has_no_effect() {
        let spec = ConverterSpec { c_2: 0.0, ..short() };
        let cfg = SensitivityConfig::new(spec, &["R_c2"]);
        assert_eq!(trajectory_sensitivity(&cfg, "R_c2").unwrap(), 0.0);
    }

    #[test]
    fn single_parameter_normalizes_to_one() {
        let cfg = SensitivityConfig::new(short(), &["L"]);
        let rep = rank_parameters(&cfg).unwrap();
        assert_eq!(rep.entries.len(), 1);
        assert_eq!(rep.entries[0].normalized, 1.0);
        assert!(!rep.all_zero);
    }

    #[test]
    fn duplicate_names_tie_and_sort_lexicographically() {
        let cfg = SensitivityConfig::new(short(), &["R_load", "L", "R_load"]);
        let rep = rank_parameters(&cfg).unwrap();
        let dups: Vec<_> = rep.entries.iter().filter(|e| e.name == "R_load").collect();
        assert_eq!(dups[0].raw, dups[1].raw);
        let rep = build_report(
            vec!["b".into(), "a".into(), "c".into()],
            vec![2.0, 2.0, 4.0],
            10,
        );
        assert_eq!(rep.names(), vec!["c", "a", "b"]);
        assert_eq!(rep.entries[1].normalized, 0.5);
    }

    #[test]
    fn all_zero_flagged() {
        let spec = ConverterSpec { c_2: 0.0, ..short() };
        let rep = rank_parameters(&SensitivityConfig::new(spec, &["R_c2", "C_2"]));
        // C_2 = 0 cannot be perturbed relatively.
        assert!(rep.is_err());
        let spec = ConverterSpec { c_2: 0.0, ..short() };
        let rep = rank_parameters(&SensitivityConfig::new(spec, &["R_c2"])).unwrap();
        assert!(rep.all_zero);
        assert_eq!(rep.entries[0].normalized, 0.0);
    }

    #[test]
    fn rejects_bad_delta_and_names() {
        let mut cfg = SensitivityConfig::new(short(), &["L"]);
        cfg.relative_perturbation = 1.0;
        assert!(rank_parameters(&cfg).is_err());
        let cfg = SensitivityConfig::new(short(), &["R_x"]);
        assert!(matches!(rank_parameters(&cfg), Err(Error::UnknownParameter(_))));
    }

    #[test]
    fn csv_shape() {
        let rep = rank_parameters(&SensitivityConfig::new(short(), &["L", "R_c1"])).unwrap();
        let csv = rep.to_csv();
        assert!(csv.starts_with("name,raw,normalized\n"));
        assert_eq!(csv.lines().count(), 3);
    }
}
