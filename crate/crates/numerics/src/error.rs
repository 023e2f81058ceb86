use thiserror::Error;

pub type Result<T, E = NumericsError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward called on an empty computation record")]
    EmptyRecord,
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
}

impl NumericsError {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        NumericsError::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        NumericsError::InvalidArgument {
            op,
            msg: msg.into(),
        }
    }
}
