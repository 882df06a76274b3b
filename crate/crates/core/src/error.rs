use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// `pivot` is 1-based.
    #[error("matrix not positive definite at pivot {pivot}")]
    NotPositiveDefinite { pivot: usize },

    #[error("non-unique ILS solution: A^T J A is not positive definite")]
    NonUniqueSolution,

    #[error("homogeneous RHS; RES undefined")]
    HomogeneousRhs,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("divergence (non-finite iterate) at step {step}")]
    Divergence { step: usize },

    #[error("dimension {dim} exceeds the dense eigensolver cap {cap}")]
    CapExceeded { dim: usize, cap: usize },

    #[error("eigensolver failed to converge")]
    EigenFailure,

    #[error("instance has no unique ILS solution; enable auto_scale or change dims")]
    InstanceNotSpd,

    #[error("{}: {msg}", path.display())]
    Parse { path: PathBuf, msg: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
