use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: format error: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: corrupt tensor file: {message}")]
    Corruption { path: PathBuf, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("config error: {0}")]
    Config(String),

    /// A remote predictor could not be reached or answered garbage.
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    /// The predictor answered a request with an explicit error payload.
    #[error("predictor error for request {id}: {message}")]
    Remote { id: u64, message: String },

    #[error("batch prediction failed for {} item(s): {}", failed.len(), describe_failures(failed))]
    Batch { failed: Vec<(usize, String)> },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("sample sets do not align; missing ids: {}", missing.join(", "))]
    Alignment { missing: Vec<String> },

    #[error("unknown sample id {0:?}")]
    UnknownSample(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error means the predictor itself is unreachable,
    /// as opposed to a problem with one particular request.
    pub fn is_transport(&self) -> bool {
        matches!(self, Error::Transport { .. })
    }
}

fn describe_failures(failed: &[(usize, String)]) -> String {
    failed
        .iter()
        .map(|(idx, msg)| format!("[{idx}] {msg}"))
        .collect::<Vec<_>>()
        .join("; ")
}
