use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the recognition stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("instance too large: {0}")]
    Capacity(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("image format error: {0}")]
    Format(String),

    #[error("no glyph for character(s) {chars:?} in font {font}")]
    MissingGlyph { font: String, chars: Vec<char> },

    #[error("training failed: {0}")]
    Training(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("metric undefined: {0}")]
    Undefined(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::Capacity(_) => "capacity",
            Error::Config(_) => "config",
            Error::Format(_) => "format",
            Error::MissingGlyph { .. } => "missing_glyph",
            Error::Training(_) => "training",
            Error::NonFinite(_) => "non_finite",
            Error::Checkpoint(_) => "checkpoint",
            Error::Undefined(_) => "undefined",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
