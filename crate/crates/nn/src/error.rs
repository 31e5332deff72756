use thiserror::Error;

/// Errors raised by tensor operations, the optimizer and checkpoint IO.
#[derive(Debug, Error)]
pub enum NnError {
    #[error("{op}: shape mismatch, expected {expected}, got {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: Vec<usize>,
    },

    #[error("conv2d: kernel {kernel:?} larger than padded input {input:?}")]
    KernelTooLarge { kernel: [usize; 2], input: [usize; 2] },

    #[error("batch_norm: train mode needs a batch of at least 2, got {0}")]
    BatchTooSmall(usize),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;
