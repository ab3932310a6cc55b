use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Data that violates a documented value range (labels, depth, images).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Unknown configuration key; carries the list of accepted keys.
    #[error("unknown configuration key `{key}`; valid keys: {}", valid.join(", "))]
    UnknownKey { key: String, valid: Vec<String> },

    #[error("shape mismatch in {what}: expected {expected}, got {actual}")]
    Shape {
        what: String,
        expected: String,
        actual: String,
    },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("non-finite value at iteration {iteration} in `{term}`")]
    NonFinite { iteration: u64, term: String },

    /// A runtime self-check of the training loop failed.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("failed to load weights from {path}: {message}")]
    Load { path: PathBuf, message: String },

    /// A checkpoint does not carry a component the command needs.
    #[error("checkpoint lacks capability: {0}")]
    Capability(String),

    #[error("incompatible resume: {0}")]
    Incompatible(String),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn shape(what: impl Into<String>, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            what: what.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// Usage errors map to exit code 2 in the CLI; everything else to 1.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::UnknownKey { .. } | Error::Config(_))
    }
}
