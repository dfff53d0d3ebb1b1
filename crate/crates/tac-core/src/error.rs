//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TacError {
    /// A tensor element was expected to be exactly -1.0 or +1.0.
    #[error("element at flat index {index} is {value}, expected exactly -1 or +1")]
    NotBinary { index: usize, value: f64 },

    /// NaN or infinity where a finite value is required.
    #[error("non-finite value {value} at flat index {index}")]
    NonFinite { index: usize, value: f64 },

    /// Dimension or length disagreement between operands.
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    /// Argument outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Malformed serialized data.
    #[error("corrupt data: {0}")]
    CorruptData(String),

    /// Training diverged (loss became non-finite).
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    /// Pipeline stages invoked out of order.
    #[error("pipeline order violation: {0}")]
    PipelineOrder(String),

    #[error("config error: {0}")]
    Config(String),

    /// A referenced input file is absent.
    #[error("missing data: {0}")]
    MissingData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TacError>;
