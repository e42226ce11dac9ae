use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Vector/matrix dimensions do not agree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A parameter or configuration value is outside its admissible range.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// A formula was evaluated outside the hypotheses under which it holds.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// An iterate or gradient sample stopped being finite.
    #[error("non-finite value encountered in {context} at iteration {iteration}")]
    Diverged { context: &'static str, iteration: u64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidSpec(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}
