//! Error type shared across the crate.

use thiserror::Error;

/// Unified error for configuration, shape, numeric, and I/O failures.
#[derive(Debug, Error)]
pub enum SgnoError {
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numeric failure: {context}")]
    Numeric { context: String },

    #[error("training diverged at step {step}: non-finite loss (lr={lr:.3e}, grad_norm={grad_norm:.3e}, batch={batch_index})")]
    TrainDiverged {
        step: usize,
        lr: f64,
        grad_norm: f64,
        batch_index: usize,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SgnoError>;

impl SgnoError {
    /// Shorthand for shape errors where only the context matters.
    pub fn shape(context: impl Into<String>, expected: &[usize], got: &[usize]) -> Self {
        SgnoError::ShapeMismatch {
            context: context.into(),
            expected: expected.to_vec(),
            got: got.to_vec(),
        }
    }

    pub fn numeric(context: impl Into<String>) -> Self {
        SgnoError::Numeric {
            context: context.into(),
        }
    }
}
