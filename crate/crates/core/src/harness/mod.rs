//! Experiment plumbing: TOML configs, measurement CSVs, synthetic data and
//! the calibration, sensitivity and weight-comparison runs behind the
//! command line tool.

mod config;
mod csvio;
mod experiment;

pub use config::{
    default_prior, echo_config, load_config, CalibrationSection, CorrectionSection, ExperimentConfig,
    IoSection, ScenarioSection,
};
pub use csvio::{load_waveform, read_waveform, save_waveform, write_overlay, write_waveform, WAVEFORM_HEADER};
pub use experiment::{
    acquire_measurements, comparison_csv, corrected_priors, generate_synthetic, percent_error,
    run_calibration, run_prior_correction, run_sensitivity, run_simulate, run_weight_comparison,
    synthesize, CalibrationReport, ComparisonSummary, GenerationReport, ParameterReport,
    SyntheticData, TruthRecord,
};
