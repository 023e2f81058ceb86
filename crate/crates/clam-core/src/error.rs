use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error(transparent)]
    Numerics(#[from] clam_numerics::NumericsError),
    #[error(transparent)]
    Neural(#[from] clam_neural::NeuralError),
    #[error(transparent)]
    Data(#[from] clam_datastore::DataError),
    #[error(transparent)]
    Checkpoint(#[from] clam_neural::CheckpointError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{what}: expected dimension {expected}, found {found}")]
    Dim {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("joint training with beta > 0 needs a labeled batch")]
    MissingLabeled,
    #[error("labeled dataset has no actions")]
    Unlabeled,
    #[error("training diverged at step {step}: {what} = {value}")]
    Divergence {
        step: usize,
        what: &'static str,
        value: f32,
    },
    #[error("dataset was generated for environment {found:#018x}, model was trained on {expected:#018x}")]
    SpecMismatch { expected: u64, found: u64 },
    #[error("codebook is empty")]
    EmptyCodebook,
    #[error("operation needs a vector-quantized model")]
    NotVq,
    #[error("diagnostics need at least {needed} samples, got {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
