use clam_numerics::NumericsError;
use thiserror::Error;

pub type Result<T, E = NeuralError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid layer configuration: {0}")]
    Config(String),
    #[error("{layer}: expected input dim {expected}, got {found}")]
    InputDim {
        layer: String,
        expected: usize,
        found: usize,
    },
    #[error("sequence length {len} exceeds max_sequence_len {max}")]
    SequenceTooLong { len: usize, max: usize },
}
