//! Fixed-step simulation of the switched converter.
//!
//! Every switching period is split into an on interval of `n_on` uniform
//! steps and an off interval of `n_off` uniform steps, so step boundaries
//! coincide with both PWM edges. Inside an interval the network is linear
//! time-invariant, and one classical RK4 step of `x' = A x + u` collapses to
//! the affine map `x <- P x + q` with
//!
//! ```text
//! P = I + hA + (hA)^2/2 + (hA)^3/6 + (hA)^4/24
//! q = h (I + hA/2 + (hA)^2/6 + (hA)^3/24) u
//! ```
//!
//! which is precomputed once per (mode, step size, load segment).
//!
//! Explicit RK4 is only stable while `h` times the spectral radius of `A`
//! stays inside its stability region. A stiff network (a large `R_s / L_s`,
//! say) would blow up at the nominal step, so the step is split into `2^k`
//! equal RK4 sub-steps with `h ||A||_inf / 2^k <= 2`, and the composed map
//! is built by `k` squarings of the sub-step map.
//!
//! During the off interval the diode turns off when `i_L` crosses zero. The
//! crossing instant is found by linear interpolation inside the step; the
//! remainder of the step is integrated in blocking mode with `i_L = 0`.

use nalgebra::SVector;

use super::spec::ConverterSpec;
use super::state_space::{state_space_for, ConductionMode, Matrix5, StateSpace, Vector5, I_L};
use super::waveform::Waveform;
use crate::error::{Error, Result};
use crate::priors::ParameterVector;

/// State magnitude treated as numerical blow-up.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

/// Largest `h ||A||_inf` taken in one RK4 sub-step. The left half-disk of
/// this radius lies inside the RK4 stability region.
const MAX_STEP_NORM: f64 = 2.0;

/// Upper bound on the sub-step halvings.
const MAX_HALVINGS: u32 = 60;

#[derive(Debug, Clone)]
struct Propagator {
    p: Matrix5,
    q: Vector5,
}

impl Propagator {
    fn new(ss: &StateSpace, v_in: f64, h: f64) -> Self {
        let norm = ss.a.row_iter().map(|r| r.abs().sum()).fold(0.0, f64::max) * h;
        let mut halvings = 0;
        while halvings < MAX_HALVINGS && norm / 2f64.powi(halvings as i32) > MAX_STEP_NORM {
            halvings += 1;
        }
        let mut prop = Self::rk4(ss, v_in, h / 2f64.powi(halvings as i32));
        for _ in 0..halvings {
            // Two consecutive steps: x <- P (P x + q) + q.
            prop = Self {
                q: prop.p * prop.q + prop.q,
                p: prop.p * prop.p,
            };
        }
        prop
    }

    fn rk4(ss: &StateSpace, v_in: f64, h: f64) -> Self {
        let ha = ss.a * h;
        let ha2 = ha * ha;
        let ha3 = ha2 * ha;
        let ha4 = ha3 * ha;
        let id = Matrix5::identity();
        let p = id + ha + ha2 / 2.0 + ha3 / 6.0 + ha4 / 24.0;
        let u = ss.b * v_in + ss.f;
        let q = (id + ha / 2.0 + ha2 / 6.0 + ha3 / 24.0) * u * h;
        Self { p, q }
    }

    #[inline]
    fn apply(&self, x: &Vector5) -> Vector5 {
        self.p * x + self.q
    }
}

/// Per-load-segment models and step maps.
#[derive(Debug, Clone)]
struct Segment {
    on: Propagator,
    diode: Propagator,
    blocking: Propagator,
    diode_ss: StateSpace,
    blocking_ss: StateSpace,
    c_out: nalgebra::SMatrix<f64, 2, 5>,
}

impl Segment {
    fn new(spec: &ConverterSpec, r_load: f64, h_on: f64, h_off: f64) -> Result<Self> {
        let on_ss = state_space_for(spec, ConductionMode::SwitchOn, r_load)?;
        let diode_ss = state_space_for(spec, ConductionMode::DiodeOn, r_load)?;
        let blocking_ss = state_space_for(spec, ConductionMode::Blocking, r_load)?;
        Ok(Self {
            on: Propagator::new(&on_ss, spec.v_in, h_on),
            diode: Propagator::new(&diode_ss, spec.v_in, h_off),
            blocking: Propagator::new(&blocking_ss, spec.v_in, h_off),
            c_out: on_ss.c_out,
            diode_ss,
            blocking_ss,
        })
    }
}

/// Sampled full-state trajectory, mainly for diagnostics and tests.
#[derive(Debug, Clone)]
pub struct StateTrajectory {
    pub t: Vec<f64>,
    pub states: Vec<[f64; 5]>,
    pub waveform: Waveform,
}

/// Simulator bound to one validated spec.
#[derive(Debug, Clone)]
pub struct Simulator {
    spec: ConverterSpec,
    n_on: usize,
    n_off: usize,
    h_on: f64,
    h_off: f64,
    segments: Vec<Segment>,
}

impl Simulator {
    pub fn new(spec: &ConverterSpec) -> Result<Self> {
        spec.validate()?;
        let spp = spec.steps_per_period;
        let n_on = ((spec.duty * spp as f64).round() as usize).clamp(1, spp - 1);
        let n_off = spp - n_on;
        let period = 1.0 / spec.f_sw;
        let h_on = spec.duty * period / n_on as f64;
        let h_off = (1.0 - spec.duty) * period / n_off as f64;
        let mut segments = vec![Segment::new(spec, spec.r_load, h_on, h_off)?];
        if let Some(step) = spec.load_step {
            segments.push(Segment::new(spec, step.r_load, h_on, h_off)?);
        }
        Ok(Self {
            spec: spec.clone(),
            n_on,
            n_off,
            h_on,
            h_off,
            segments,
        })
    }

    pub fn spec(&self) -> &ConverterSpec {
        &self.spec
    }

    /// Integration steps in the on and off intervals of one period.
    pub fn steps(&self) -> (usize, usize) {
        (self.n_on, self.n_off)
    }

    pub fn run(&self) -> Result<Waveform> {
        self.integrate(false).map(|tr| tr.waveform)
    }

    pub fn run_states(&self) -> Result<StateTrajectory> {
        self.integrate(true)
    }

    fn integrate(&self, keep_states: bool) -> Result<StateTrajectory> {
        let spec = &self.spec;
        let k_total = spec.sample_count();
        if k_total == 0 {
            return Err(Error::EmptyWaveform);
        }
        let fs = spec.sample_rate;
        let period = 1.0 / spec.f_sw;
        let t_on = spec.duty * period;
        let n_periods = (spec.t_end * spec.f_sw - 1e-9).ceil().max(1.0) as usize;
        let step_time = spec.load_step.map(|s| s.time).unwrap_or(f64::INFINITY);

        let mut sampler = Sampler {
            fs,
            k_total,
            next: 0,
            t: Vec::with_capacity(k_total),
            v: Vec::with_capacity(k_total),
            i: Vec::with_capacity(k_total),
            states: if keep_states {
                Vec::with_capacity(k_total)
            } else {
                Vec::new()
            },
        };

        let mut x = Vector5::zeros();
        for p in 0..n_periods {
            if sampler.done() {
                break;
            }
            let t_start = p as f64 * period;
            let seg = &self.segments[usize::from(t_start >= step_time)];

            for j in 0..self.n_on {
                let t0 = t_start + j as f64 * self.h_on;
                let t1 = t_start + (j + 1) as f64 * self.h_on;
                let x1 = seg.on.apply(&x);
                sampler.record(t0, &x, t1, &x1, &seg.c_out);
                x = x1;
            }

            let mut blocking = x[I_L] <= 0.0;
            if blocking {
                x[I_L] = 0.0;
            }
            for j in 0..self.n_off {
                let t0 = t_start + t_on + j as f64 * self.h_off;
                let t1 = t_start + t_on + (j + 1) as f64 * self.h_off;
                let x1 = if blocking {
                    let mut x1 = seg.blocking.apply(&x);
                    x1[I_L] = 0.0;
                    x1
                } else {
                    let x1 = seg.diode.apply(&x);
                    if x1[I_L] < 0.0 {
                        blocking = true;
                        self.diode_turn_off(seg, &x, &x1)
                    } else {
                        x1
                    }
                };
                sampler.record(t0, &x, t1, &x1, &seg.c_out);
                x = x1;
            }

            if x.iter().any(|v| !(v.abs() <= DIVERGENCE_LIMIT)) {
                return Err(self.divergence(t_start + period));
            }
        }
        // Final sample instants can sit past the last grid point by rounding.
        let seg = self.segments.last().expect("at least one segment");
        while !sampler.done() {
            sampler.push(&x, &seg.c_out);
        }

        let waveform = Waveform {
            t: sampler.t.clone(),
            v_out: sampler.v,
            i_out: sampler.i,
        };
        Ok(StateTrajectory {
            t: sampler.t,
            states: sampler.states,
            waveform,
        })
    }

    /// Splits a diode-mode step whose end point has `i_L < 0` at the
    /// linearly interpolated zero crossing.
    fn diode_turn_off(&self, seg: &Segment, x0: &Vector5, x1: &Vector5) -> Vector5 {
        let i0 = x0[I_L];
        let theta = (i0 / (i0 - x1[I_L])).clamp(0.0, 1.0);
        let mut mid = if theta > 0.0 {
            Propagator::new(&seg.diode_ss, self.spec.v_in, theta * self.h_off).apply(x0)
        } else {
            *x0
        };
        mid[I_L] = 0.0;
        let rest = (1.0 - theta) * self.h_off;
        let mut out = if rest > 0.0 {
            Propagator::new(&seg.blocking_ss, self.spec.v_in, rest).apply(&mid)
        } else {
            mid
        };
        out[I_L] = 0.0;
        out
    }

    fn divergence(&self, time: f64) -> Error {
        Error::Divergence {
            time,
            params: crate::converter::spec::PARAMETER_NAMES
                .iter()
                .map(|n| (n.to_string(), self.spec.get(n).unwrap_or(f64::NAN)))
                .collect(),
        }
    }
}

/// Nearest-grid-point sampling onto the uniform output grid.
struct Sampler {
    fs: f64,
    k_total: usize,
    next: usize,
    t: Vec<f64>,
    v: Vec<f64>,
    i: Vec<f64>,
    states: Vec<[f64; 5]>,
}

impl Sampler {
    fn done(&self) -> bool {
        self.next >= self.k_total
    }

    fn sample_time(&self) -> f64 {
        self.next as f64 / self.fs
    }

    #[inline]
    fn record(
        &mut self,
        t0: f64,
        x0: &Vector5,
        t1: f64,
        x1: &Vector5,
        c_out: &nalgebra::SMatrix<f64, 2, 5>,
    ) {
        while !self.done() {
            let ts = self.sample_time();
            if ts > t1 {
                break;
            }
            let x = if ts - t0 <= t1 - ts { x0 } else { x1 };
            self.push(x, c_out);
        }
    }

    fn push(&mut self, x: &Vector5, c_out: &nalgebra::SMatrix<f64, 2, 5>) {
        let y: SVector<f64, 2> = c_out * x;
        self.t.push(self.sample_time());
        self.v.push(y[0]);
        self.i.push(y[1]);
        if self.states.capacity() > 0 {
            self.states.push([x[0], x[1], x[2], x[3], x[4]]);
        }
        self.next += 1;
    }
}

/// Simulates `spec` with the named parameters in `overrides` replaced.
pub fn simulate(spec: &ConverterSpec, overrides: &ParameterVector) -> Result<Waveform> {
    let spec = overrides.apply_to(spec)?;
    match Simulator::new(&spec)?.run() {
        Err(Error::Divergence { time, .. }) => Err(Error::Divergence {
            time,
            params: overrides.pairs(),
        }),
        other => other,
    }
}
