use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GrdlError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GrdlError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("batch norm received an empty batch")]
    EmptyBatch,

    #[error("missing dataset file {0}")]
    MissingFile(PathBuf),

    #[error("failed to parse {file}:{line}: {detail}")]
    Parse {
        file: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("corrupt dataset: {0}")]
    CorruptDataset(String),

    #[error("batch error: {0}")]
    Batch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("reference initialization failed: {0}")]
    Init(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch} (param norms: {param_norms:?})")]
    NumericalAbort {
        epoch: usize,
        batch: usize,
        param_norms: Vec<(String, f64)>,
    },

    #[error("unsupported metric: {0}")]
    UnsupportedMetric(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl GrdlError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        GrdlError::Shape {
            op,
            detail: detail.into(),
        }
    }
}
