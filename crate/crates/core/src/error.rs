use std::path::PathBuf;

use thiserror::Error;
use tmdpt_tensor::checkpoint::CheckpointError;
use tmdpt_tensor::TensorError;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("format error: {0}")]
    Format(String),
    #[error("frame has no valid depth pixels")]
    EmptyFrame,
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("checkpoint incompatible with config: {0}")]
    Incompatible(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch} (lr {lr}): {detail}")]
    NumericAbort {
        epoch: usize,
        batch: usize,
        lr: f64,
        detail: String,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CoreError {
    let path = path.into();
    move |source| CoreError::Io { path, source }
}
