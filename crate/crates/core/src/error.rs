use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate vector: norm {norm:e} is below {threshold:e}")]
    DegenerateVector { norm: f64, threshold: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("state error: {0}")]
    State(String),

    #[error("data integrity error: {0}")]
    DataIntegrity(String),

    #[error("format error in {source_name} at byte {offset}: {message}")]
    Format {
        source_name: String,
        offset: usize,
        message: String,
    },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("site {site_id} has no samples with label {label}")]
    MissingClass { site_id: u16, label: u8 },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("homogeneity violation: {0}")]
    Homogeneity(String),

    #[error("training diverged at epoch {epoch}, sample {sample}: {detail}")]
    TrainingDiverged {
        epoch: usize,
        sample: usize,
        detail: String,
    },

    #[error("client for site {site_id} failed: {source}")]
    ClientFailure {
        site_id: u16,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Homogeneity(_) | Error::Protocol(_) | Error::State(_) => {
                ErrorClass::Config
            }
            Error::Numeric(_) | Error::DegenerateVector { .. } | Error::TrainingDiverged { .. } => {
                ErrorClass::Numeric
            }
            Error::ClientFailure { source, .. } => source.class(),
            Error::Dimension(_)
            | Error::DataIntegrity(_)
            | Error::Format { .. }
            | Error::Manifest(_)
            | Error::Split(_)
            | Error::MissingClass { .. }
            | Error::Io { .. }
            | Error::Json { .. } => ErrorClass::Data,
        }
    }
}
