use std::path::PathBuf;

use crate::bandit::ArmIndex;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid behavior policy: {0}")]
    InvalidPolicy(String),

    #[error("request exceeds arm support: arm {arm} has {available} points, {requested} requested")]
    RequestExceedsSupport {
        arm: ArmIndex,
        available: usize,
        requested: usize,
    },

    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error("block range {start}..{end} (block size {block_size}) out of bounds for {len} points")]
    BlockOutOfRange {
        start: usize,
        end: usize,
        block_size: usize,
        len: usize,
    },

    #[error("sensitivity bound invalid: k too large (k = {k}, limit = {limit:.4})")]
    SensitivityPrecondition { k: usize, limit: f64 },

    #[error("rollback empties arm {0}")]
    RollbackEmptiesArm(ArmIndex),

    #[error("invalid privacy parameter: {0}")]
    InvalidPrivacy(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
