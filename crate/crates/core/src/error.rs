use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain where the model is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Caller-supplied data violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two frequency grids that must be identical differ.
    #[error("frequency grids differ at index {index}: {left} vs {right} MHz")]
    GridMismatch { index: usize, left: f64, right: f64 },

    /// The model produced NaN or infinity for the given parameter vector.
    #[error("model evaluation is not finite at parameters {params:?}")]
    NonFiniteModel { params: Vec<f64> },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
