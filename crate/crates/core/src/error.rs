use thiserror::Error;

use crate::tensor::TensorError;
use crate::treebank::TreeError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("input: {0}")]
    Input(String),
    #[error("config: {0}")]
    Config(String),
    #[error("incompatible: {0}")]
    Compat(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 1 runtime failure, 2 configuration, 3
    /// compatibility, 4 verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Compat(_) | Error::Checkpoint(_) => 3,
            Error::Verification(_) => 4,
            _ => 1,
        }
    }
}
