use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("block id {id} out of range (partition has {count} blocks)")]
    BlockOutOfRange { id: usize, count: usize },

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: String, iterations: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("diagnostics: {0}")]
    Diagnostics(String),

    /// A block worker panicked; `state` holds the chain state at the start
    /// of the failing colour phase.
    #[error("chain aborted in cycle {cycle}: {reason}")]
    ChainAborted {
        cycle: u64,
        reason: String,
        state: Vec<f64>,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::SizeMismatch { expected, got })
    }
}
