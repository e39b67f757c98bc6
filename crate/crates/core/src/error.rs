//! Error type shared by every pipeline stage.

use thiserror::Error;

/// Errors produced by the forecasting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violated a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The series has no usable variation (e.g. zero standard deviation).
    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    /// Sample entropy is undefined because a template-match count is zero.
    #[error("undefined sample entropy: {0}")]
    UndefinedEntropy(String),

    /// A recursive forecast produced a non-finite value.
    #[error("diverged forecast: {0}")]
    DivergedForecast(String),

    /// Malformed input data (CSV schema, parse failures, inconsistent series).
    #[error("data error: {0}")]
    Data(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// An internal invariant was violated; indicates a bug.
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateSeries(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
