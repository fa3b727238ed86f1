//! Linear network equations of the buck power stage, one set per conduction
//! mode.
//!
//! State ordering is `[i_Ls, v_Cin, i_L, v_C1, v_C2]` (see [`StateIndex`]).
//! Within one conduction mode the circuit is linear time-invariant:
//!
//! ```text
//! dx/dt = A x + B V_in + f
//! [V_out; I_out] = C_out x + D_out V_in
//! ```
//!
//! where `f` carries the diode forward drop while the diode conducts.

use nalgebra::{SMatrix, SVector};

use super::spec::ConverterSpec;
use crate::error::{Error, Result};

pub type Matrix5 = SMatrix<f64, 5, 5>;
pub type Vector5 = SVector<f64, 5>;
pub type Row5 = SMatrix<f64, 1, 5>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum StateIndex {
    SourceCurrent = 0,
    InputCapVoltage = 1,
    InductorCurrent = 2,
    OutputCap1Voltage = 3,
    OutputCap2Voltage = 4,
}

pub const I_LS: usize = StateIndex::SourceCurrent as usize;
pub const V_CIN: usize = StateIndex::InputCapVoltage as usize;
pub const I_L: usize = StateIndex::InductorCurrent as usize;
pub const V_C1: usize = StateIndex::OutputCap1Voltage as usize;
pub const V_C2: usize = StateIndex::OutputCap2Voltage as usize;

/// Switch configuration of the power stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConductionMode {
    /// MOSFET on, diode reverse biased.
    SwitchOn,
    /// MOSFET off, inductor current freewheels through the diode.
    DiodeOn,
    /// Both off, inductor current clamped at zero (DCM).
    Blocking,
}

impl ConductionMode {
    pub fn from_switches(switch_on: bool, diode_conducting: bool) -> Result<Self> {
        match (switch_on, diode_conducting) {
            (true, false) => Ok(Self::SwitchOn),
            (false, true) => Ok(Self::DiodeOn),
            (false, false) => Ok(Self::Blocking),
            (true, true) => Err(Error::InvalidArgument(
                "MOSFET and diode cannot conduct simultaneously".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: Matrix5,
    pub b: Vector5,
    /// Constant forcing independent of `V_in` (diode drop).
    pub f: Vector5,
    pub c_out: SMatrix<f64, 2, 5>,
    pub d_out: SVector<f64, 2>,
}

impl StateSpace {
    /// `A x + B V_in + f`.
    pub fn derivative(&self, x: &Vector5, v_in: f64) -> Vector5 {
        self.a * x + self.b * v_in + self.f
    }

    pub fn outputs(&self, x: &Vector5, v_in: f64) -> (f64, f64) {
        let y = self.c_out * x + self.d_out * v_in;
        (y[0], y[1])
    }
}

/// Output node relations: `v_out` and the two capacitor branch currents as
/// linear forms of the state.
struct OutputNode {
    v_out: Row5,
    i_c1: Row5,
    i_c2: Row5,
}

fn unit(i: usize) -> Row5 {
    let mut r = Row5::zeros();
    r[i] = 1.0;
    r
}

fn output_node(spec: &ConverterSpec, r_load: f64) -> Result<OutputNode> {
    if !(r_load > 0.0) {
        return Err(Error::DegenerateTopology(format!(
            "load resistance {r_load} shorts the output"
        )));
    }
    let g_load = 1.0 / r_load;
    let has1 = spec.c_1 > 0.0;
    let has2 = spec.c_2 > 0.0;
    let stiff1 = has1 && spec.r_c1 == 0.0;
    let stiff2 = has2 && spec.r_c2 == 0.0;
    let x_il = unit(I_L);
    let x1 = unit(V_C1);
    let x2 = unit(V_C2);

    let node = if stiff1 && stiff2 {
        // Two ideal capacitors in parallel act as one of capacitance C_1 + C_2.
        let c_tot = spec.c_1 + spec.c_2;
        let v_out = x1 * (spec.c_1 / c_tot) + x2 * (spec.c_2 / c_tot);
        let i_tot = x_il - v_out * g_load;
        OutputNode {
            v_out,
            i_c1: i_tot * (spec.c_1 / c_tot),
            i_c2: i_tot * (spec.c_2 / c_tot),
        }
    } else if stiff1 {
        let i_c2 = if has2 {
            (x1 - x2) / spec.r_c2
        } else {
            Row5::zeros()
        };
        OutputNode {
            v_out: x1,
            i_c1: x_il - i_c2 - x1 * g_load,
            i_c2,
        }
    } else if stiff2 {
        let i_c1 = if has1 {
            (x2 - x1) / spec.r_c1
        } else {
            Row5::zeros()
        };
        OutputNode {
            v_out: x2,
            i_c1,
            i_c2: x_il - i_c1 - x2 * g_load,
        }
    } else {
        let g1 = if has1 { 1.0 / spec.r_c1 } else { 0.0 };
        let g2 = if has2 { 1.0 / spec.r_c2 } else { 0.0 };
        let g = g1 + g2 + g_load;
        let v_out = (x_il + x1 * g1 + x2 * g2) / g;
        OutputNode {
            v_out,
            i_c1: (v_out - x1) * g1,
            i_c2: (v_out - x2) * g2,
        }
    };
    if [&node.v_out, &node.i_c1, &node.i_c2]
        .iter()
        .any(|r| r.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::DegenerateTopology(
            "output node equations are singular".into(),
        ));
    }
    Ok(node)
}

/// Builds the state-space model of one conduction mode using the converter's
/// load resistance.
pub fn build_state_space(
    spec: &ConverterSpec,
    switch_on: bool,
    diode_conducting: bool,
) -> Result<StateSpace> {
    let mode = ConductionMode::from_switches(switch_on, diode_conducting)?;
    state_space_for(spec, mode, spec.r_load)
}

/// Same as [`build_state_space`] with an explicit load resistance, used for
/// the segment after a load step.
pub fn state_space_for(
    spec: &ConverterSpec,
    mode: ConductionMode,
    r_load: f64,
) -> Result<StateSpace> {
    if !(spec.l > 0.0 && spec.l_s > 0.0 && spec.c_in > 0.0) {
        return Err(Error::DegenerateTopology(
            "L, L_s and C_in must be positive".into(),
        ));
    }
    let out = output_node(spec, r_load)?;
    let x_ils = unit(I_LS);
    let x_vcin = unit(V_CIN);
    let x_il = unit(I_L);

    // Current drawn from the input bus by the MOSFET.
    let i_m = match mode {
        ConductionMode::SwitchOn => x_il,
        _ => Row5::zeros(),
    };
    let i_cin = x_ils - i_m;
    let v_bus = x_vcin + i_cin * spec.r_cin;

    let mut a = Matrix5::zeros();
    let mut b = Vector5::zeros();
    let mut f = Vector5::zeros();

    a.set_row(I_LS, &((-(x_ils * spec.r_s) - v_bus) / spec.l_s));
    b[I_LS] = 1.0 / spec.l_s;
    a.set_row(V_CIN, &(i_cin / spec.c_in));

    match mode {
        ConductionMode::SwitchOn => {
            let v_sw = v_bus - x_il * spec.r_m;
            a.set_row(I_L, &((v_sw - x_il * spec.r_l - out.v_out) / spec.l));
        }
        ConductionMode::DiodeOn => {
            a.set_row(I_L, &((-(x_il * spec.r_l) - out.v_out) / spec.l));
            f[I_L] = -spec.v_d / spec.l;
        }
        ConductionMode::Blocking => {}
    }

    if spec.c_1 > 0.0 {
        a.set_row(V_C1, &(out.i_c1 / spec.c_1));
    }
    if spec.c_2 > 0.0 {
        a.set_row(V_C2, &(out.i_c2 / spec.c_2));
    }

    let mut c_out = SMatrix::<f64, 2, 5>::zeros();
    c_out.set_row(0, &out.v_out);
    c_out.set_row(1, &(out.v_out / r_load));

    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateTopology("non-finite network matrix".into()));
    }

    Ok(StateSpace {
        a,
        b,
        f,
        c_out,
        d_out: SVector::<f64, 2>::zeros(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn both_switches_on_is_rejected() {
        let spec = ConverterSpec::default();
        assert!(build_state_space(&spec, true, true).is_err());
    }

    #[test]
    fn blocking_mode_freezes_inductor_current() {
        let spec = ConverterSpec::default();
        let ss = build_state_space(&spec, false, false).unwrap();
        assert!(ss.a.row(I_L).iter().all(|&v| v == 0.0));
        assert_eq!(ss.b[I_L], 0.0);
        assert_eq!(ss.f[I_L], 0.0);
    }

    #[test]
    fn ideal_limit_matches_textbook_buck() {
        let spec = ConverterSpec::default().ideal();
        let ss = build_state_space(&spec, true, false).unwrap();
        // di_L/dt = (v_Cin - v_C)/L with the merged output capacitor.
        assert_relative_eq!(ss.a[(I_L, V_CIN)], 1.0 / spec.l, max_relative = 1e-14);
        assert_relative_eq!(
            ss.a[(I_L, V_C1)] + ss.a[(I_L, V_C2)],
            -1.0 / spec.l,
            max_relative = 1e-14
        );
        assert_eq!(ss.a[(I_L, I_L)], 0.0);
        // Merged capacitor sees i_L - v/R.
        let c = spec.c_1 + spec.c_2;
        assert_relative_eq!(ss.a[(V_C1, I_L)], 1.0 / c, max_relative = 1e-14);
    }

    #[test]
    fn diode_drop_enters_as_constant_forcing() {
        let spec = ConverterSpec {
            v_d: 0.7,
            ..Default::default()
        };
        let ss = build_state_space(&spec, false, true).unwrap();
        assert_relative_eq!(ss.f[I_L], -0.7 / spec.l);
        let on = build_state_space(&spec, true, false).unwrap();
        assert_eq!(on.f[I_L], 0.0);
    }

    #[test]
    fn removed_branch_has_no_dynamics() {
        let spec = ConverterSpec {
            c_2: 0.0,
            ..Default::default()
        };
        let ss = build_state_space(&spec, true, false).unwrap();
        assert!(ss.a.row(V_C2).iter().all(|&v| v == 0.0));
        assert!(ss.a.column(V_C2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_current_is_voltage_over_load() {
        let spec = ConverterSpec::default();
        let ss = build_state_space(&spec, true, false).unwrap();
        let x = Vector5::new(0.3, 11.0, 1.2, 3.2, 3.1);
        let (v, i) = ss.outputs(&x, spec.v_in);
        assert_relative_eq!(i, v / spec.r_load, max_relative = 1e-14);
    }
}
