use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("compile error: {0}")]
    Compile(String),

    #[error("singular metric (condition estimate {0:.3e})")]
    SingularMetric(f64),

    #[error("homogeneity violation: Euler residual {residual:.3e} at x={x:?}, y={y:?}")]
    Homogeneity {
        residual: f64,
        x: Vec<f64>,
        y: Vec<f64>,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("ansatz domain error: {0}")]
    AnsatzDomain(String),

    #[error("no progress: {0}")]
    NoProgress(String),

    #[error("report serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
