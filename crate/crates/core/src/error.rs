use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("dimension mismatch: expected {expected} entries, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index out of range: {what} = {index}, limit {limit}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("integration fault at step {step} (t = {time}): {reason}")]
    IntegrationFault {
        step: u64,
        time: f64,
        reason: String,
        /// Last finite state before the fault.
        last_state: Vec<f64>,
    },

    #[error("size guard exceeded: {size} > {limit}")]
    SizeGuard { size: u128, limit: u128 },

    #[error("unsupported input: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
