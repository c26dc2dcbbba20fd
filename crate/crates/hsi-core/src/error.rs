//! Error type shared by all numerical modules.

use thiserror::Error;

/// Errors raised by cube algebra, operators, the denoiser, and the solver.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Shapes of two operands (or an operand and a kernel) do not line up.
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    /// A parameter is outside its admissible range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A computation produced NaN or infinity from finite inputs.
    #[error("non-finite value produced in {context}")]
    NonFinite { context: String },

    /// The ADMM loop detected NaN/Inf in an iterate.
    #[error("non-finite iterate at ADMM iteration {iteration}")]
    NonFiniteIterate { iteration: usize },

    /// A problem is too large for the dense reference solver.
    #[error("dense solver limit exceeded: {unknowns} unknowns (max {max})")]
    DenseSizeExceeded { unknowns: usize, max: usize },

    /// Training aborted because the loss became NaN/Inf.
    #[error("training diverged at step {step}: loss is not finite")]
    TrainingDiverged { step: usize },

    /// Training was asked to run on an empty dataset.
    #[error("empty training dataset")]
    EmptyDataset,

    /// Gradients were requested against a forward pass made with older weights.
    #[error("stale forward cache: model weights changed since the forward pass")]
    StaleCache,

    /// An observation contains no usable measurements.
    #[error("empty observation: {0}")]
    EmptyObservation(String),

    /// Checkpoint file problems, each with a distinct code.
    #[error("checkpoint error: {0}")]
    Checkpoint(#[from] CheckpointError),
}

/// Failures while reading or writing a model checkpoint.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic bytes (not a model checkpoint)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checksum mismatch (file corrupted)")]
    CrcMismatch,
    #[error("file truncated")]
    Truncated,
    #[error("architecture descriptor does not match parameter blob: {0}")]
    DescriptorMismatch(String),
    #[error("malformed architecture descriptor: {0}")]
    BadDescriptor(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
