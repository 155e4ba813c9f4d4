//! Crate-wide error type with process exit-code classification.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type. Variants are grouped by how the command-line tool
/// reports them: configuration/usage problems exit with code 2, numerical
/// failures with 3, and infeasibility with 4.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent configuration, including dimension
    /// mismatches and out-of-range settings.
    #[error("config error: {0}")]
    Config(String),

    /// File or serialization problems while reading/writing artifacts.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// JSON (de)serialization failure for a named artifact.
    #[error("json error on {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    /// Numerical failure: factorization breakdown, degenerate training
    /// targets, non-finite values where finite ones are required.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A graph or free vector violates the feasibility constraints.
    #[error("infeasible: {0}")]
    Infeasible(String),
}

impl Error {
    /// Construct a configuration error from anything displayable.
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Construct a numerical error from anything displayable.
    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Construct an infeasibility error from anything displayable.
    pub fn infeasible(msg: impl Into<String>) -> Self {
        Error::Infeasible(msg.into())
    }

    /// Wrap an I/O error with the path it occurred on.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Wrap a JSON error with the artifact path it occurred on.
    pub fn json(path: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }

    /// Process exit code for the command-line tool: 2 for configuration and
    /// I/O problems, 3 for numerical failures, 4 for infeasibility.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io { .. } | Error::Json { .. } => 2,
            Error::Numerical(_) => 3,
            Error::Infeasible(_) => 4,
        }
    }
}
