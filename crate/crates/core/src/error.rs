use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the CLI to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("unknown id {0}")]
    UnknownId(String),

    #[error("duplicate id {0}")]
    DuplicateId(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("empty corpus: {0}")]
    EmptyCorpus(&'static str),

    #[error("training diverged at epoch {epoch} (loss is not finite)")]
    Diverged { epoch: usize },

    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("network '{0}' has no edges; structure embedding needs edges (use the attrs_only variant)")]
    EdgelessNetwork(String),

    #[error("level {level} has {actual} columns, expected {expected}")]
    ColumnMismatch {
        level: String,
        expected: usize,
        actual: usize,
    },

    #[error(
        "regularized {side} covariance is not positive definite (smallest eigenvalue {min_eigenvalue:e}); increase the regularization"
    )]
    NotPositiveDefinite {
        side: &'static str,
        min_eigenvalue: f64,
    },

    #[error("requested {requested} pairs but only {available} are available")]
    InsufficientPairs { requested: usize, available: usize },

    #[error("no ranking for query {0}")]
    MissingRanking(usize),

    #[error("pair index {index} appears more than once on the {side} side")]
    NotOneToOne { side: &'static str, index: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidConfig(_) => ErrorClass::Config,
            Error::Diverged { .. } | Error::NotPositiveDefinite { .. } => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}
