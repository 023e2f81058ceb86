//! Numeric substrate for the latent action lab.
//!
//! Row-major dense tensors, a tape that records forward operations for
//! reverse-mode differentiation, an Adam optimizer over a named parameter
//! store, a finite-difference gradient checker, and labelled seed derivation.
//!
//! Training runs in `f32`. Every type is generic over [`Real`] so that the
//! gradient checker can replay the same forward graph in `f64`.

mod adam;
mod error;
mod gradcheck;
pub mod op_cases;
mod params;
mod real;
pub mod rng;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use error::{NumericsError, Result};
pub use gradcheck::{
    analytic_gradients, grad_check, grad_check_at, numeric_gradients, CheckedOp, GradCheckReport,
    FD_STEP,
};
pub use params::{ParamId, ParamStore};
pub use real::Real;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

/// LeakyReLU negative slope used throughout the model zoo.
pub const LEAKY_SLOPE: f64 = 0.2;
