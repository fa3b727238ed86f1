//! Parameter identification for DC-DC buck converters.
//!
//! The crate is organized bottom-up:
//!
//! - [`converter`]: switched state-space model of the buck power stage and a
//!   fixed-step simulator producing sampled `V_out`/`I_out` waveforms.
//! - [`sensitivity`]: central-difference trajectory sensitivities used to
//!   pick which parameters are worth calibrating.
//! - [`priors`]: prior distributions and the pilot-run prior correction for
//!   parameters without usable prior knowledge.
//! - [`smc`]: the adaptive ABC-SMC sampler (distance, weights, thresholds,
//!   perturbation kernel, engine).
//! - [`harness`]: config files, measurement I/O and experiment orchestration
//!   behind the `buckcal` command line tool.

// Negated comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod converter;
pub mod error;
pub mod harness;
mod parallel;
pub mod priors;
pub mod sensitivity;
pub mod smc;

pub use converter::{simulate, ConverterSpec, LoadStep, Waveform};
pub use error::{Error, Result};
pub use priors::{ParameterVector, Prior, PriorSet};
