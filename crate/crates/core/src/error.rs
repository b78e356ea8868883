use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inputs that violate a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid mask spec: {0}")]
    InvalidSpec(String),

    #[error("config error: {0}")]
    Config(String),

    /// Malformed file contents. `offset` is the byte offset where parsing failed.
    #[error("parse error at byte offset {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("noise calibration did not converge after {iterations} iterations; sigma bracket [{lo:e}, {hi:e}]")]
    Calibration { iterations: usize, lo: f64, hi: f64 },

    #[error("reconstruction diverged at iteration {iteration}\n{dump}")]
    Divergence { iteration: usize, dump: String },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for command-line front ends: 1 for invalid input,
    /// 2 for I/O failures and 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::InvalidSpec(_)
            | Error::Config(_)
            | Error::Parse { .. } => 1,
            Error::Io { .. } => 2,
            Error::Calibration { .. } | Error::Divergence { .. } | Error::Numerical(_) => 3,
        }
    }
}
