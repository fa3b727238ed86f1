//! Switched state-space model of the buck converter and its simulator.

mod simulate;
pub mod spec;
pub mod state_space;
mod waveform;

pub use simulate::{simulate, Simulator, StateTrajectory, DIVERGENCE_LIMIT};
pub use spec::{unit_of, ConverterSpec, LoadStep, PARAMETER_NAMES};
pub use state_space::{build_state_space, ConductionMode, StateSpace};
pub use waveform::Waveform;
