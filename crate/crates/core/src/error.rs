use std::path::PathBuf;

/// Errors raised by the simulation suite.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter or configuration failed validation.
    #[error("invalid parameter: {0}")]
    Validation(String),

    /// A numerical solver (root finder, Riccati iteration, linear solve)
    /// failed to produce a usable answer.
    #[error("numerical solver failure: {0}")]
    Solver(String),

    /// Scheme and channel configuration are incompatible.
    #[error("scheme `{scheme}` cannot run on this configuration: {reason}")]
    SchemeMismatch { scheme: String, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn solver(msg: impl Into<String>) -> Self {
        Error::Solver(msg.into())
    }

    pub fn mismatch(scheme: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::SchemeMismatch {
            scheme: scheme.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code for the CLI: 2 for validation problems, 3 for
    /// numerical failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::SchemeMismatch { .. } => 2,
            Error::Solver(_) => 3,
            Error::Io { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
