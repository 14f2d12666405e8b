use std::path::PathBuf;

use thiserror::Error;

/// Coarse failure class. The CLI maps these onto process exit codes, so every
/// error constructed anywhere in the library should pick the variant whose
/// class matches how a caller ought to react.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad arguments, malformed data, degenerate inputs, refused requests.
    Validation,
    /// The filesystem let us down.
    Io,
    /// Non-finite values, failed gradient checks, numerical breakdown.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch {lhs} vs {rhs}")]
    Shape {
        op: &'static str,
        lhs: String,
        rhs: String,
    },

    #[error("{0}")]
    Invalid(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("checkpoint {}: {msg}", path.display())]
    Checkpoint { path: PathBuf, msg: String },

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io { .. } => ErrorCategory::Io,
            Error::Numeric(_) => ErrorCategory::Numeric,
            Error::Shape { .. }
            | Error::Invalid(_)
            | Error::Degenerate(_)
            | Error::Parse { .. }
            | Error::Checkpoint { .. } => ErrorCategory::Validation,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
