use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed URDF: {0}")]
    Urdf(String),

    #[error("unsupported URDF feature: {0}")]
    Unsupported(String),

    #[error("link `{0}` is not connected to the base link")]
    DisconnectedLink(String),

    #[error("unknown link `{0}`")]
    UnknownLink(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid mesh {path}: {reason}")]
    Mesh { path: PathBuf, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("objective is not finite at the initial point")]
    NonFiniteObjective,

    #[error("no feasible goal: {0}")]
    NoFeasibleGoal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
