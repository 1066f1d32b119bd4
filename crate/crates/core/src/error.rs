use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// The variants map onto the process exit codes used by the CLI, see
/// [`AeganError::exit_code`].
#[derive(Debug, Error)]
pub enum AeganError {
    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("unknown configuration key `{key}`{}", suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    UnknownKey {
        key: String,
        suggestion: Option<String>,
    },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("non-finite `{component}` at step {step}")]
    NonFinite { component: String, step: u64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

pub type Result<T, E = AeganError> = std::result::Result<T, E>;

impl AeganError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        AeganError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn shape(expected: impl Into<String>, actual: impl Into<String>) -> Self {
        AeganError::Shape {
            expected: expected.into(),
            actual: actual.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AeganError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 configuration, 3 data, 4 numerical abort, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            AeganError::Config { .. } | AeganError::UnknownKey { .. } | AeganError::Usage(_) => 2,
            AeganError::Data(_) | AeganError::Shape { .. } | AeganError::Image { .. } => 3,
            AeganError::NonFinite { .. } => 4,
            AeganError::Checkpoint(_) | AeganError::Io { .. } => 1,
        }
    }
}
