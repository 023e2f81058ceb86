use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Core(#[from] clam_core::CoreError),
    #[error(transparent)]
    Numerics(#[from] clam_numerics::NumericsError),
    #[error(transparent)]
    Neural(#[from] clam_neural::NeuralError),
    #[error(transparent)]
    Data(#[from] clam_datastore::DataError),
    #[error(transparent)]
    Sim(#[from] clam_worldsim::SimError),
    #[error(transparent)]
    Checkpoint(#[from] clam_neural::CheckpointError),
    #[error("latent dimension mismatch: policy emits {policy}, action model expects {lam}")]
    LatentDimMismatch { policy: usize, lam: usize },
    #[error("{what}: expected dimension {expected}, found {found}")]
    Dim {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("dataset has no {0}")]
    MissingLabels(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at step {step}")]
    Divergence { step: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = PolicyError> = std::result::Result<T, E>;
