use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },

    #[error("invalid image dimensions {height}x{width}: {reason}")]
    Dimensions {
        height: usize,
        width: usize,
        reason: &'static str,
    },

    #[error("invalid kernel: {0}")]
    Kernel(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("line {line}: expected {expected}")]
    Parse { line: usize, expected: String },

    #[error("unsupported schema version {found} (supported: {supported})")]
    SchemaVersion { found: String, supported: String },

    #[error("malformed {what} at byte {offset}: {message}")]
    Malformed {
        what: &'static str,
        offset: usize,
        message: String,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Decode { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that originate in the filesystem rather than in the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
