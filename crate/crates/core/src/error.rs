use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its documented range.
    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    /// A function was evaluated outside of its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// An input violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// `log λ̃(x)` is not finite for at least one detection.
    #[error("log-likelihood is not finite: intensity {intensity} at t = {time:e} s")]
    NonFiniteLikelihood { time: f64, intensity: f64 },

    /// The synchronous likelihood needs the number of armed periods.
    #[error("synchronous likelihood requires the armed-period count")]
    MissingArmedCount,

    #[error("histogram contains no detections")]
    EmptyHistogram,

    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),

    #[error("point {0} coincides with the detector")]
    ZeroRange(usize),

    #[error("score model failure: {0}")]
    ScoreModelFailure(String),

    #[error("{file}:{line}: {message}")]
    Format {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn format(file: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            file: file.into(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
