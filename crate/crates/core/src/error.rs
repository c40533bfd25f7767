// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A row of an input file could not be interpreted. `line` is 1-based.
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },

    #[error("unknown format `{0}`")]
    UnknownFormat(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid value for {name}: {msg}")]
    InvalidParameter { name: String, msg: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown {kind} `{id}`")]
    UnknownId { kind: &'static str, id: String },

    #[error("weight matrix has no non-zero entry")]
    ZeroMatrix,

    #[error("random walk did not converge in {iterations} iterations (last L1 residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("symmetric eigendecomposition did not converge")]
    EigenNotConverged,

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub fn param(name: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Malformed { .. } => "malformed",
            Error::UnknownFormat(_) => "unknown-format",
            Error::Empty(_) => "empty",
            Error::InvalidParameter { .. } => "invalid-parameter",
            Error::DimensionMismatch(_) => "dimension-mismatch",
            Error::UnknownId { .. } => "unknown-id",
            Error::ZeroMatrix => "zero-matrix",
            Error::NotConverged { .. } => "not-converged",
            Error::EigenNotConverged => "eigen-not-converged",
            Error::Format(_) => "format",
        }
    }
}
