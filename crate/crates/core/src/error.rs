use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid ranking: {0}")]
    InvalidRanking(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("observation ({item}, {assortment}) is not a member pair of the instance")]
    InvalidObservation { item: usize, assortment: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("dual point lies outside the dual ball (dual norm {norm})")]
    OutsideDualBall { norm: f64 },

    #[error("distance {distance} is not supported here: {reason}")]
    UnsupportedDistance { distance: String, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("enumeration guard exceeded: n = {n} > {limit}")]
    EnumerationGuard { n: usize, limit: usize },

    #[error("domain violation: {0}")]
    Domain(String),

    #[error("data source produced no snapshot")]
    EmptyData,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.to_string(),
        }
    }

    /// True for errors caused by bad user input or configuration rather than
    /// runtime failures.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidInstance(_)
                | Error::InvalidRanking(_)
                | Error::InvalidModel(_)
                | Error::UnsupportedDistance { .. }
                | Error::Config(_)
                | Error::EnumerationGuard { .. }
                | Error::Parse { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
