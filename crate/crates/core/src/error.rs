use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    /// Decimation or resampling would fold signal energy above the new Nyquist frequency.
    #[error("aliasing: signal occupies {occupied_hz:.4e} Hz but the target Nyquist frequency is {nyquist_hz:.4e} Hz")]
    Aliasing { occupied_hz: f64, nyquist_hz: f64 },

    #[error("synchronization failed: peak-to-sidelobe ratio {psr:.3} below {threshold}")]
    SyncFailure { psr: f64, threshold: f64 },

    #[error("numerical divergence in {stage} after {updates} updates: {detail}")]
    Divergence {
        stage: &'static str,
        updates: usize,
        detail: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Short machine-readable category, used for run-failure records and the C ABI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::Aliasing { .. } => "aliasing",
            Error::SyncFailure { .. } => "sync_failure",
            Error::Divergence { .. } => "divergence",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Csv { .. } => "csv",
        }
    }
}
