use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("search space of {size} configurations exceeds the cap of {cap}")]
    SpaceTooLarge { size: u128, cap: u128 },
    #[error("infeasible matching: {0}")]
    InfeasibleMatching(String),
    #[error("replay buffer holds {have} transitions but {need} were requested")]
    Underfull { have: usize, need: usize },
    #[error("action index {index} out of range for {len} actions")]
    ActionOutOfRange { index: usize, len: usize },
    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
