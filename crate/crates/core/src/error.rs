use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid user-supplied configuration (bad parameter, bad combination).
    #[error("config error: {0}")]
    Config(String),

    /// Input data violates a precondition (non-finite values, bad dims, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A serialized artifact does not parse.
    #[error("format error: {0}")]
    Format(String),

    /// A serialized artifact ended early.
    #[error("truncated input: needed {needed} bytes, had {available}")]
    Truncated { needed: usize, available: usize },

    /// Stored checksum does not match the payload.
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    /// Two fields that must agree in shape do not.
    #[error("dims mismatch: {left:?} vs {right:?}")]
    DimsMismatch { left: Vec<usize>, right: Vec<usize> },

    /// Workflow planning failed (cycle, unknown reference, empty sweep).
    #[error("planning error: {0}")]
    Planning(String),

    /// A workflow job failed while running.
    #[error("job '{job}' failed: {message}")]
    Job { job: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn json(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Json { path: path.into(), message: err.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
