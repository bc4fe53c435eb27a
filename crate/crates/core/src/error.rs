use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid code parameters: {0}")]
    InvalidCode(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("frozen bit {0} is set in the message word")]
    FrozenViolation(usize),

    #[error("malformed stage permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid channel parameters: {0}")]
    InvalidChannel(String),

    #[error("invalid decoder configuration: {0}")]
    InvalidDecoderConfig(String),

    #[error("invalid bandit configuration: {0}")]
    InvalidBandit(String),

    #[error("binomial coefficient overflows u128 for n = {n}, M = {m}")]
    Overflow { n: usize, m: usize },

    #[error("reward must be 0 or 1, got {0}")]
    InvalidReward(u8),

    #[error("invalid campaign configuration: {0}")]
    InvalidCampaign(String),

    #[error("bandit budget of {budget} time steps not reached within {max_frames} frames (got {reached})")]
    BudgetUnreachable {
        budget: usize,
        reached: usize,
        max_frames: u64,
    },

    #[error("failed to parse {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
