use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// A side stream required by the strategy has no qualifying examples.
    #[error("unremediable stream: {0}")]
    UnremediableStream(String),

    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(&'static str),

    #[error("non-finite loss at step {step} (last losses: {last:?})")]
    NonFiniteLoss { step: usize, last: alloc::vec::Vec<f64> },

    #[error("calibration error: task {task} has no negative examples")]
    Calibration { task: usize },

    #[error("undefined conditioning event: {0}")]
    UndefinedCondition(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),
}
