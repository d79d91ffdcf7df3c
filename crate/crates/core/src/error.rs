use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("block index {index} out of range 1..={blocks}")]
    BlockIndex { index: usize, blocks: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },

    #[error("invalid block layout: {0}")]
    Layout(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("operation not supported: {0}")]
    Unsupported(String),

    #[error("non-finite value in block {block} at iteration {iteration}")]
    NonFinite { block: usize, iteration: usize },

    #[error("{0}")]
    Check(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
