use std::path::PathBuf;

/// Errors raised across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument fell outside its legal domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// An architecture, objective or run configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
    /// A loss or parameter became non-finite during optimization.
    #[error("training diverged at step {step}: {reason}")]
    Diverged { step: u64, reason: String },
    /// A metric cannot be computed for the given inputs.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    /// A checkpoint does not match the architecture it is loaded into.
    #[error("checkpoint mismatch at tensor `{tensor}`: {detail}")]
    CheckpointMismatch { tensor: String, detail: String },
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! domain {
    ($($arg:tt)*) => { $crate::error::Error::Domain(format!($($arg)*)) };
}
macro_rules! config_err {
    ($($arg:tt)*) => { $crate::error::Error::Config(format!($($arg)*)) };
}
pub(crate) use config_err;
pub(crate) use domain;
