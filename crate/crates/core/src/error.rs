use std::path::PathBuf;

use crate::edf::EdfError;
use crate::tensor::TensorError;
use crate::wgan::Checkpoint;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Edf(#[from] EdfError),
    #[error("{}: {source}", path.display())]
    EdfFile {
        path: PathBuf,
        #[source]
        source: EdfError,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite {what} at iteration {iteration}")]
    NonFinite { iteration: usize, what: String, last_checkpoint: Option<Box<Checkpoint>> },
    #[error("architecture mismatch: checkpoint {found}, build {expected}")]
    ArchMismatch { expected: String, found: String },
    #[error("classifier has not been trained")]
    UntrainedClassifier,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
