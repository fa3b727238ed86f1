//! Test-side oracles written directly from the circuit equations, sharing no
//! code with the library's state-space builder or propagators.

#![allow(dead_code)]

use buckcal::{ConverterSpec, Waveform};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    On,
    Diode,
    Blocking,
}

/// Node voltages and branch currents of the netlist for state
/// `[i_Ls, v_Cin, i_L, v_C1, v_C2]`. Requires positive capacitor ESRs.
pub struct Nodal {
    pub v_out: f64,
    pub i_out: f64,
    pub dx: [f64; 5],
}

pub fn nodal(spec: &ConverterSpec, r_load: f64, mode: Mode, x: &[f64; 5]) -> Nodal {
    let [i_ls, v_cin, i_l, v1, v2] = *x;
    // KCL at the output node: i_L = v/R + (v - v1)/R_c1 + (v - v2)/R_c2.
    let g1 = 1.0 / spec.r_c1;
    let g2 = 1.0 / spec.r_c2;
    let v_out = (i_l + g1 * v1 + g2 * v2) / (1.0 / r_load + g1 + g2);
    let i_c1 = (v_out - v1) * g1;
    let i_c2 = (v_out - v2) * g2;

    let i_m = if mode == Mode::On { i_l } else { 0.0 };
    let i_cin = i_ls - i_m;
    let v_bus = v_cin + spec.r_cin * i_cin;
    let di_l = match mode {
        Mode::On => (v_bus - spec.r_m * i_l - spec.r_l * i_l - v_out) / spec.l,
        Mode::Diode => (-spec.v_d - spec.r_l * i_l - v_out) / spec.l,
        Mode::Blocking => 0.0,
    };
    Nodal {
        v_out,
        i_out: v_out / r_load,
        dx: [
            (spec.v_in - spec.r_s * i_ls - v_bus) / spec.l_s,
            i_cin / spec.c_in,
            di_l,
            i_c1 / spec.c_1,
            i_c2 / spec.c_2,
        ],
    }
}

fn rk4(spec: &ConverterSpec, r: f64, mode: Mode, x: &[f64; 5], h: f64) -> [f64; 5] {
    let f = |y: &[f64; 5]| nodal(spec, r, mode, y).dx;
    let add = |a: &[f64; 5], b: &[f64; 5], s: f64| std::array::from_fn(|i| a[i] + s * b[i]);
    let k1 = f(x);
    let k2 = f(&add(x, &k1, h / 2.0));
    let k3 = f(&add(x, &k2, h / 2.0));
    let k4 = f(&add(x, &k3, h));
    std::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Reference integrator: classical RK4 with `steps_per_period` steps split
/// at the PWM edges, sampled exactly when the output grid falls on step
/// boundaries (it does for the step counts used in the tests). A period
/// boundary belongs to the period it ends, so a sample there sees the load
/// before a step.
pub fn reference_waveform(spec: &ConverterSpec, steps_per_period: usize) -> Waveform {
    let period = 1.0 / spec.f_sw;
    let n_on = ((spec.duty * steps_per_period as f64).round() as usize).clamp(1, steps_per_period - 1);
    let n_off = steps_per_period - n_on;
    let h_on = spec.duty * period / n_on as f64;
    let h_off = (1.0 - spec.duty) * period / n_off as f64;
    let k_total = (spec.t_end * spec.sample_rate).round() as usize;
    let periods = (spec.t_end / period).ceil() as usize + 1;

    let mut t_grid = Vec::new();
    let mut states = Vec::new();
    let mut loads = Vec::new();
    let mut x = [0.0; 5];
    for p in 0..periods {
        let t0 = p as f64 * period;
        let r = match spec.load_step {
            Some(s) if t0 >= s.time => s.r_load,
            _ => spec.r_load,
        };
        if p == 0 {
            t_grid.push(t0);
            states.push(x);
            loads.push(r);
        }
        for k in 0..n_on {
            x = rk4(spec, r, Mode::On, &x, h_on);
            t_grid.push(t0 + (k + 1) as f64 * h_on);
            states.push(x);
            loads.push(r);
        }
        let mut mode = Mode::Diode;
        for k in 0..n_off {
            let y = rk4(spec, r, mode, &x, h_off);
            x = y;
            if mode == Mode::Diode && x[2] < 0.0 {
                x[2] = 0.0;
                mode = Mode::Blocking;
            }
            t_grid.push(t0 + spec.duty * period + (k + 1) as f64 * h_off);
            states.push(x);
            loads.push(r);
        }
    }

    let (mut t, mut v, mut i) = (Vec::new(), Vec::new(), Vec::new());
    let mut j = 0;
    for k in 0..k_total {
        let ts = k as f64 / spec.sample_rate;
        while j + 1 < t_grid.len() && (t_grid[j + 1] - ts).abs() <= (t_grid[j] - ts).abs() {
            j += 1;
        }
        let n = nodal(spec, loads[j], Mode::Diode, &states[j]);
        t.push(ts);
        v.push(n.v_out);
        i.push(n.i_out);
    }
    Waveform::new(t, v, i).unwrap()
}

/// `||a - b||_2 / ||b||_2` over both channels.
pub fn relative_rms(a: &Waveform, b: &Waveform) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..a.len() {
        num += (a.v_out[k] - b.v_out[k]).powi(2) + (a.i_out[k] - b.i_out[k]).powi(2);
        den += b.v_out[k].powi(2) + b.i_out[k].powi(2);
    }
    (num / den).sqrt()
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic two-sample KS p-value.
pub fn ks_p_value(d: f64, n: usize, m: usize) -> f64 {
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        p += 2.0 * (-1.0f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
    }
    p.clamp(0.0, 1.0)
}

/// One-sample KS statistic against a CDF.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic one-sample KS p-value.
pub fn ks_one_sample_p(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        p += 2.0 * (-1.0f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
    }
    p.clamp(0.0, 1.0)
}
