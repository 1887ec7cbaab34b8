use thiserror::Error;

/// Errors produced by the policy-optimization library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("action {action} out of range for {count} actions")]
    InvalidAction { action: usize, count: usize },

    #[error("state {state} out of range for {count} states")]
    InvalidState { state: usize, count: usize },

    #[error("step index {index} out of range for trajectory of length {len}")]
    StepOutOfRange { index: usize, len: usize },

    #[error("empty trajectory set")]
    EmptyBatch,

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("eigendecomposition failed")]
    Eigen,

    #[error("enumeration would produce {0} trajectories, above the guard of {1}")]
    EnumerationTooLarge(u128, u128),

    #[error("planned quantity `{0}` overflows the integer range")]
    PlanOverflow(&'static str),

    #[error("failed to parse MDP description: {0}")]
    Parse(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
