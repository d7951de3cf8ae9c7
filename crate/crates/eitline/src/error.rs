use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate medium parameters: {0}")]
    DegenerateParameters(String),

    #[error("frequency mismatch: state at {state_hz} Hz, response at {response_hz} Hz")]
    FrequencyMismatch { state_hz: f64, response_hz: f64 },

    #[error("sample-rate mismatch: {a} Hz vs {b} Hz")]
    SampleRateMismatch { a: f64, b: f64 },

    #[error("record too short: need {needed} samples, have {have}")]
    RecordTooShort { needed: usize, have: usize },

    #[error("no delay found: correlation peak {peak:.4} below significance threshold {threshold:.4}")]
    NoDelayFound { peak: f64, threshold: f64 },

    #[error("frequency grids are not aligned")]
    GridMismatch,

    #[error("fit did not converge after {iterations} iterations (final cost {final_cost:.6e})")]
    NonConvergence {
        iterations: usize,
        final_cost: f64,
        /// (iteration, cost) trace for diagnostics.
        trace: Vec<(usize, f64)>,
    },

    #[error("degenerate fit: parameter `{parameter}` is not identifiable from the data")]
    DegenerateFit { parameter: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
