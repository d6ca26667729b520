use thiserror::Error;

/// Errors raised by the model, estimation and selection routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FaError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty dataset")]
    EmptyData,

    #[error("number of factors k={k} exceeds the bound k_max={k_max} for d={d}")]
    TooManyFactors { k: usize, k_max: usize, d: usize },

    #[error("variable index {index} out of range 1..={d}")]
    IndexOutOfRange { index: usize, d: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("covariance is not positive definite ({context})")]
    NotPositiveDefinite { context: String },

    #[error("variable {variable} is never observed")]
    UnobservedVariable { variable: usize },

    #[error("zero variance in column {column}")]
    ZeroVariance { column: usize },

    #[error("invalid missing rate {rate} for variable {variable}; rates must lie in [0, 1)")]
    InvalidRate { variable: usize, rate: f64 },

    #[error("singular accumulated weight matrix in the mean update")]
    SingularWeights,

    #[error("singular factor moment sum for variable {variable}")]
    SingularMomentSum { variable: usize },

    #[error("estimation failed at iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<FaError>,
    },

    #[error("no value of k could be fitted")]
    NoSuccessfulFit,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{failed} of {total} replications failed (limit 5%)")]
    TooManyFailures { failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, FaError>;
