use thiserror::Error;

#[derive(Debug, Error)]
pub enum TgvError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value in field at index {0}")]
    NonFinite(usize),

    #[error("linear solver failure: {0}")]
    Solver(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64, history: Vec<f64> },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, TgvError>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(TgvError::Parameter(msg.into()))
}
