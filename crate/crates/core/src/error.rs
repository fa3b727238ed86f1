use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid converter spec: {0}")]
    InvalidSpec(String),

    #[error("degenerate topology: {0}")]
    DegenerateTopology(String),

    #[error("simulation diverged at t = {time:.3e} s with parameters {params:?}")]
    Divergence {
        time: f64,
        params: Vec<(String, f64)>,
    },

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("invalid prior for `{name}`: {reason}")]
    InvalidPrior { name: String, reason: String },

    #[error("waveform grids differ: {0}")]
    GridMismatch(String),

    #[error("empty waveform")]
    EmptyWaveform,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("prior correction failed: all {0} probe simulations diverged")]
    CorrectionFailed(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error at line {line}: {reason}")]
    Csv { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
