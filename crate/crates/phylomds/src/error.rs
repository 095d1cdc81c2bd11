//! Crate-wide error type.
//!
//! Variants are grouped by category so the CLI can map failures to stable
//! process exit codes: configuration/validation problems, I/O and parse
//! problems, numeric failures, and missing capabilities.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid argument or configuration value caught before any computation.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Structurally invalid input data (bad matrix, bad tree, bad network).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Parse failure in an input file, with position context where available.
    #[error("parse error in {path:?}: {message}")]
    Parse { path: PathBuf, message: String },

    /// Underlying filesystem failure.
    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Numeric failure during computation (non-finite value, failed
    /// factorization, empty reduction).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Requested hardware or backend is not available on this host.
    #[error("capability not available: {0}")]
    Capability(String),
}

impl Error {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn capability(msg: impl Into<String>) -> Self {
        Error::Capability(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code for the CLI: 2 config/validation, 3 I/O and parse,
    /// 4 numeric, 5 capability.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::InvalidInput(_) => 2,
            Error::Parse { .. } | Error::Io { .. } => 3,
            Error::Numeric(_) => 4,
            Error::Capability(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
