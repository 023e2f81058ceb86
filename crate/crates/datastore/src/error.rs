use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a CLAMDATA file (magic {0:02x?})")]
    BadMagic(Vec<u8>),
    #[error("unsupported CLAMDATA version {found} (this build reads {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("file truncated at byte {0}")]
    Truncated(usize),
    #[error("malformed dataset file: {0}")]
    Malformed(String),
    #[error("dataset invariant violated: {0}")]
    Invariant(String),
    #[error("dataset is empty")]
    Empty,
    #[error("expert reached only {successes}/{wanted} successful episodes in {attempts} attempts")]
    ExpertUnattainable {
        wanted: usize,
        successes: usize,
        attempts: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Sim(#[from] clam_worldsim::SimError),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;
