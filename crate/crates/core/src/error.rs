use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input data, files, or configuration.
    Data,
    /// Numerical failure: divergence, failed gradient check.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: usize, label: String },

    #[error("line {line}: duplicate record id {id:?}")]
    DuplicateId { line: usize, id: String },

    #[error("line {line}: invalid record: {reason}")]
    InvalidRecord { line: usize, reason: String },

    #[error("invalid label set: {0}")]
    LabelSet(String),

    #[error("split: {0}")]
    Split(String),

    #[error("preprocessing: {0}")]
    Prep(String),

    #[error("vocabulary: {0}")]
    Vocab(String),

    #[error("packing: {0}")]
    Pack(String),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("index out of range in {op}: {index} >= {bound}")]
    Index {
        op: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("graph: {0}")]
    Graph(String),

    #[error("model: {0}")]
    Model(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("gradient check failed: max relative error {max_rel_err:e} > {tolerance:e}")]
    GradCheck { max_rel_err: f64, tolerance: f64 },

    #[error("metrics: {0}")]
    Metrics(String),

    #[error("config: {0}")]
    Config(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Divergence { .. } | Error::GradCheck { .. } => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }
}
