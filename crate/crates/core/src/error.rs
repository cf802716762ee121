use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A distribution parameter is outside its valid domain.
    #[error("parameter domain error: {0}")]
    Domain(String),

    /// Caller broke a shape or ordering contract.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("training error: {0}")]
    Training(String),

    #[error("initialisation error: {0}")]
    Init(String),

    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error("{}: {message}", path.display())]
    Corpus { path: PathBuf, message: String },

    #[error("checkpoint load error: {0}")]
    Load(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
