use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Load change applied once during a run: at `time` the load resistance
/// switches to `r_load`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadStep {
    pub time: f64,
    #[serde(rename = "R_load")]
    pub r_load: f64,
}

/// Complete description of the buck power stage and the simulation run.
///
/// The power stage is: source `V_in` behind `R_s`/`L_s`, an input capacitor
/// `C_in` with ESR `R_cin` on the input bus, a high-side MOSFET with on
/// resistance `R_M`, a freewheeling diode with forward drop `V_d`, the main
/// inductor `L` with series resistance `R_L`, and two output capacitor
/// branches (`R_c1`-`C_1`, `R_c2`-`C_2`) in parallel with a resistive load.
///
/// All values are SI. A capacitance of zero on `C_1` or `C_2` removes that
/// branch from the circuit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConverterSpec {
    #[serde(rename = "V_in")]
    pub v_in: f64,
    #[serde(rename = "D")]
    pub duty: f64,
    pub f_sw: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "R_L")]
    pub r_l: f64,
    #[serde(rename = "R_M")]
    pub r_m: f64,
    #[serde(rename = "V_d")]
    pub v_d: f64,
    #[serde(rename = "L_s")]
    pub l_s: f64,
    #[serde(rename = "R_s")]
    pub r_s: f64,
    #[serde(rename = "C_in")]
    pub c_in: f64,
    #[serde(rename = "R_cin")]
    pub r_cin: f64,
    #[serde(rename = "C_1")]
    pub c_1: f64,
    #[serde(rename = "C_2")]
    pub c_2: f64,
    #[serde(rename = "R_c1")]
    pub r_c1: f64,
    #[serde(rename = "R_c2")]
    pub r_c2: f64,
    #[serde(rename = "R_load")]
    pub r_load: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub load_step: Option<LoadStep>,
    pub t_end: f64,
    pub sample_rate: f64,
    pub steps_per_period: usize,
}

impl Default for ConverterSpec {
    /// Reference design: 12 V to 3.3 V at 200 kHz into 3.3 ohm, with the
    /// component values used throughout the calibration experiments.
    fn default() -> Self {
        Self {
            v_in: 12.0,
            duty: 0.275,
            f_sw: 200e3,
            l: 33e-6,
            r_l: 0.03,
            r_m: 0.05,
            v_d: 0.0,
            l_s: 0.4e-6,
            r_s: 0.16,
            c_in: 100e-6,
            r_cin: 0.02,
            c_1: 100e-6,
            c_2: 100e-6,
            r_c1: 0.065,
            r_c2: 0.3,
            r_load: 3.3,
            load_step: None,
            t_end: 2e-3,
            sample_rate: 1e6,
            steps_per_period: 20,
        }
    }
}

/// Names of the circuit parameters that can be addressed by name, in
/// declaration order.
pub const PARAMETER_NAMES: [&str; 16] = [
    "V_in", "D", "f_sw", "L", "R_L", "R_M", "V_d", "L_s", "R_s", "C_in", "R_cin", "C_1", "C_2",
    "R_c1", "R_c2", "R_load",
];

/// SI unit symbol of a named parameter.
pub fn unit_of(name: &str) -> &'static str {
    match name {
        "D" => "",
        "f_sw" => "Hz",
        "V_in" | "V_d" => "V",
        n if n.starts_with('L') => "H",
        n if n.starts_with('C') => "F",
        n if n.starts_with('R') => "ohm",
        _ => "",
    }
}

impl ConverterSpec {
    /// Ideal buck with every resistive parasitic and the diode drop removed.
    pub fn ideal(&self) -> Self {
        Self {
            r_l: 0.0,
            r_m: 0.0,
            v_d: 0.0,
            r_s: 0.0,
            r_cin: 0.0,
            r_c1: 0.0,
            r_c2: 0.0,
            ..self.clone()
        }
    }

    fn field(&mut self, name: &str) -> Result<&mut f64> {
        Ok(match name {
            "V_in" => &mut self.v_in,
            "D" => &mut self.duty,
            "f_sw" => &mut self.f_sw,
            "L" => &mut self.l,
            "R_L" => &mut self.r_l,
            "R_M" => &mut self.r_m,
            "V_d" => &mut self.v_d,
            "L_s" => &mut self.l_s,
            "R_s" => &mut self.r_s,
            "C_in" => &mut self.c_in,
            "R_cin" => &mut self.r_cin,
            "C_1" => &mut self.c_1,
            "C_2" => &mut self.c_2,
            "R_c1" => &mut self.r_c1,
            "R_c2" => &mut self.r_c2,
            "R_load" => &mut self.r_load,
            other => return Err(Error::UnknownParameter(other.to_string())),
        })
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        self.clone().field(name).map(|v| *v)
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        *self.field(name)? = value;
        Ok(())
    }

    pub fn is_parameter(name: &str) -> bool {
        PARAMETER_NAMES.contains(&name)
    }

    /// Number of output samples, `round(t_end * sample_rate)`.
    pub fn sample_count(&self) -> usize {
        (self.t_end * self.sample_rate).round().max(0.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        for name in PARAMETER_NAMES {
            let v = self.get(name)?;
            if !v.is_finite() {
                return bad(format!("{name} = {v} is not finite"));
            }
            if v < 0.0 {
                return bad(format!("{name} = {v} must be non-negative"));
            }
        }
        for (name, v) in [
            ("V_in", self.v_in),
            ("f_sw", self.f_sw),
            ("L", self.l),
            ("L_s", self.l_s),
            ("C_in", self.c_in),
            ("R_load", self.r_load),
        ] {
            if v <= 0.0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.c_1 + self.c_2 <= 0.0 {
            return bad("at least one of C_1, C_2 must be positive".into());
        }
        if !(self.duty > 0.0 && self.duty < 1.0) {
            return bad(format!("D = {} must lie in (0, 1)", self.duty));
        }
        if self.steps_per_period < 20 {
            return bad(format!(
                "steps_per_period = {} must be at least 20",
                self.steps_per_period
            ));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return bad(format!("t_end = {} must be finite and >= 0", self.t_end));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return bad("sample_rate must be positive".into());
        }
        if self.sample_rate > self.f_sw * self.steps_per_period as f64 * (1.0 + 1e-12) {
            return bad(format!(
                "sample_rate {} exceeds the integration rate f_sw * steps_per_period",
                self.sample_rate
            ));
        }
        if let Some(step) = self.load_step {
            if !(step.time.is_finite() && step.time >= 0.0) {
                return bad("load_step.time must be finite and >= 0".into());
            }
            if !(step.r_load.is_finite() && step.r_load > 0.0) {
                return bad("load_step.R_load must be positive".into());
            }
        }
        Ok(())
    }
}
