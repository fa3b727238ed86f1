//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every entry point takes and returns JSON text so the page needs no
//! generated glue beyond `wasm-bindgen` itself.

use std::collections::BTreeMap;

use buckcal::converter::Simulator;
use buckcal::sensitivity::{rank_parameters, SensitivityConfig, DEFAULT_CANDIDATES};
use buckcal::smc::{smc_run_with, ConverterModel, EngineConfig, WeightScheme};
use buckcal::{ConverterSpec, LoadStep, Prior, PriorSet};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    /// Parameter overrides by name.
    pub params: BTreeMap<String, f64>,
    pub load_step: Option<LoadStep>,
    pub t_end: Option<f64>,
}

impl Scenario {
    fn spec(&self) -> buckcal::Result<ConverterSpec> {
        let mut spec = ConverterSpec::default();
        for (k, &v) in &self.params {
            spec.set(k, v)?;
        }
        spec.load_step = self.load_step;
        if let Some(t) = self.t_end {
            spec.t_end = t;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Serialize)]
pub struct Trace {
    pub t: Vec<f64>,
    pub v_out: Vec<f64>,
    pub i_out: Vec<f64>,
    pub steady_mean_v: f64,
    pub steady_ripple_v: f64,
}

pub fn simulate_scenario(s: &Scenario) -> buckcal::Result<Trace> {
    let w = Simulator::new(&s.spec()?)?.run()?;
    let ss = w.steady_state_window(0.2)?;
    Ok(Trace {
        steady_mean_v: ss.mean_v_out(),
        steady_ripple_v: ss.ripple_v_out(),
        t: w.t,
        v_out: w.v_out,
        i_out: w.i_out,
    })
}

#[derive(Debug, Serialize)]
pub struct Bar {
    pub name: String,
    pub normalized: f64,
}

pub fn sensitivity_bars(s: &Scenario) -> buckcal::Result<Vec<Bar>> {
    let report = rank_parameters(&SensitivityConfig::new(s.spec()?, &DEFAULT_CANDIDATES))?;
    Ok(report
        .entries
        .into_iter()
        .map(|e| Bar {
            name: e.name,
            normalized: e.normalized,
        })
        .collect())
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationRequest {
    /// Hidden "true" converter that produces the measurements.
    pub truth: Scenario,
    pub parameters: Vec<String>,
    /// Uniform prior bounds as multiples of each parameter's nominal value.
    pub prior_span: [f64; 2],
    pub n: usize,
    pub t: usize,
    pub seed: u64,
    pub baseline: bool,
}

impl Default for CalibrationRequest {
    fn default() -> Self {
        Self {
            truth: Scenario::default(),
            parameters: vec!["L".into(), "C_2".into()],
            prior_span: [0.25, 3.0],
            n: 200,
            t: 6,
            seed: 1,
            baseline: false,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct GenerationSummary {
    pub epsilon: f64,
    pub acceptance_rate: f64,
    pub n_sims: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct CalibrationOutcome {
    pub names: Vec<String>,
    pub truth: Vec<f64>,
    pub prior_bounds: Vec<[f64; 2]>,
    pub generations: Vec<GenerationSummary>,
    /// Final particles as `[values..., weight]` rows.
    pub particles: Vec<Vec<f64>>,
}

pub fn calibrate_small(req: &CalibrationRequest) -> buckcal::Result<CalibrationOutcome> {
    let truth_spec = req.truth.spec()?;
    let nominal = ConverterSpec::default();
    let measurements = Simulator::new(&truth_spec)?.run()?;
    let mut bounds = Vec::new();
    let mut entries = Vec::new();
    for p in &req.parameters {
        let v = nominal.get(p)?;
        let b = [req.prior_span[0] * v, req.prior_span[1] * v];
        entries.push((p.clone(), Prior::Uniform { low: b[0], high: b[1] }));
        bounds.push(b);
    }
    let priors = PriorSet::new(entries)?;
    let model = ConverterModel::new(truth_spec.clone(), req.parameters.clone(), measurements)?;
    let cfg = EngineConfig {
        n_particles: req.n,
        t_max: req.t,
        seed: req.seed,
        weight_scheme: if req.baseline { WeightScheme::Baseline } else { WeightScheme::Proposed },
        ..EngineConfig::default()
    };
    let res = smc_run_with(&cfg, &priors, &model, |_| {})?;
    let generations = res
        .populations
        .iter()
        .map(|p| GenerationSummary {
            epsilon: p.epsilon_used,
            acceptance_rate: p.diagnostics.acceptance_rate,
            n_sims: p.diagnostics.n_sims,
            mean: p.weighted_mean(),
            std: p.weighted_std(),
        })
        .collect();
    let particles = res
        .final_population()
        .particles
        .iter()
        .map(|p| p.params.iter().copied().chain([p.weight]).collect())
        .collect();
    Ok(CalibrationOutcome {
        truth: req.parameters.iter().map(|p| truth_spec.get(p)).collect::<buckcal::Result<_>>()?,
        names: req.parameters.clone(),
        prior_bounds: bounds,
        generations,
        particles,
    })
}

fn js_call<Req, Resp>(input: &str, f: impl Fn(&Req) -> buckcal::Result<Resp>) -> Result<String, JsError>
where
    Req: for<'de> Deserialize<'de>,
    Resp: Serialize,
{
    let req: Req = serde_json::from_str(input)?;
    let out = f(&req).map_err(|e| JsError::new(&e.to_string()))?;
    Ok(serde_json::to_string(&out)?)
}

/// `Scenario` JSON in, `Trace` JSON out.
#[wasm_bindgen]
pub fn simulate(scenario: &str) -> Result<String, JsError> {
    js_call(scenario, simulate_scenario)
}

/// `Scenario` JSON in, ranked `[{name, normalized}]` out.
#[wasm_bindgen]
pub fn sensitivity(scenario: &str) -> Result<String, JsError> {
    js_call(scenario, sensitivity_bars)
}

/// `CalibrationRequest` JSON in, `CalibrationOutcome` JSON out.
#[wasm_bindgen]
pub fn calibrate(request: &str) -> Result<String, JsError> {
    js_call(request, calibrate_small)
}
