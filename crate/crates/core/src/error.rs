use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("invalid weight matrix: {0}")]
    Weights(String),

    #[error("invalid objective configuration: {0}")]
    Objective(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("block {node} of D is not positive definite")]
    NotPositiveDefinite { node: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("{method} diverged: F increased for {streak} consecutive iterations (t = {iteration}, F = {value})")]
    Diverged {
        method: String,
        iteration: usize,
        streak: usize,
        value: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed CSV at line {line}: {reason}")]
    Csv { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
