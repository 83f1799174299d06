use thiserror::Error;

/// Errors raised by the model, the solvers and the simulation driver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid probability vector: {0}")]
    InvalidProbVector(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("{solver} failed to converge after {iterations} iterations (residual {residual:e})")]
    SolverFailure {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("policy enumeration needs {required} policies, cap is {cap}")]
    EnumerationCap { required: u128, cap: u128 },

    #[error("inconsistent count tables: {0}")]
    InconsistentCounts(String),

    #[error("invalid Dirichlet parameter: {0}")]
    InvalidAlpha(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("episode {replicate} failed at step {step}: {source}")]
    Episode {
        replicate: usize,
        step: usize,
        #[source]
        source: Box<MdpError>,
    },
}

pub type Result<T> = std::result::Result<T, MdpError>;
