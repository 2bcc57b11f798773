//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by solvers, metrics and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs whose shapes do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A parameter outside its documented domain (negative bandwidth,
    /// zero iterations, out-of-range index, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A combination of options the algorithms do not support, such as the
    /// polynomial multiplicative rule with degree other than 2.
    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    /// The iteration produced a non-finite cost. Carries the cost trace
    /// collected up to the failure.
    #[error("run diverged at iteration {iteration}: cost is not finite")]
    Diverged { iteration: usize, trace: Vec<f64> },

    /// Non-finite values or sign violations encountered mid-computation.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A file whose contents do not match the expected format.
    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },

    /// Underlying I/O failure.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
