use thiserror::Error;

/// Errors raised by the kernel, field, metric and training routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A radial profile with a cusp at zero was evaluated at zero distance.
    #[error("kernel log-gradient undefined at zero distance for a singular profile")]
    SingularAtZero,

    #[error("degenerate bandwidth: {0}")]
    DegenerateBandwidth(String),

    /// Every reference coincides with the query, so no direction survives.
    #[error("degenerate query: all {0} references coincide with the query point")]
    DegenerateQuery(usize),

    #[error("degenerate statistic: {0}")]
    Degenerate(String),

    #[error("non-finite loss {loss} at step {step}")]
    NonFinite { step: usize, loss: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}
