//! Layers and trunks for latent action models.
//!
//! Modules own [`ParamId`](clam_numerics::ParamId)s into a shared
//! [`ParamStore`](clam_numerics::ParamStore) and record their forward pass
//! on a [`Tape`](clam_numerics::Tape). Everything is generic over the float
//! type so layers can be gradient-checked in `f64`.

pub mod attention;
pub mod checkpoint;
mod error;
pub mod init;
pub mod linear;
pub mod mlp;
pub mod transformer;

pub use attention::MultiheadAttention;
pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use error::{NeuralError, Result};
pub use linear::Linear;
pub use mlp::{FinalActivation, Mlp, MlpSpec};
pub use transformer::{causal_mask, DecoderBlock, EncoderBlock, LayerNorm, TransformerSpec};
