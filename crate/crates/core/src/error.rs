use std::path::PathBuf;

use crate::dag::{DataType, NodeId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("type mismatch: {found} ≠ {expected}")]
    TypeMismatch { expected: DataType, found: DataType },

    #[error("invalid pipeline: {0}")]
    InvalidGraph(String),

    #[error("cycle detected through node {0}")]
    Cycle(NodeId),

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("matrix is singular or rank deficient: {0}")]
    Singular(String),

    #[error("solver diverged: {0}")]
    Diverged(String),

    #[error("no feasible implementation for node {node}: {reason}")]
    NoFeasibleImpl { node: String, reason: String },

    #[error("filter bank is not separable")]
    NotSeparable,

    #[error("empty vocabulary")]
    EmptyVocabulary,

    #[error("heterogeneous record shapes: {0}")]
    HeterogeneousRecords(String),

    #[error("node {node} failed: {source}")]
    NodeFailed {
        node: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{what} ({count} nodes) exceeds the limit of {limit}")]
    TooLarge {
        what: &'static str,
        count: usize,
        limit: usize,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
