//! Datasets of rollouts and the batching used by latent action model training.

mod dataset;
mod error;
mod format;
mod generate;
mod window;

pub use dataset::{Dataset, Role, Trajectory};
pub use error::{DataError, Result};
pub use format::{decode_dataset, encode_dataset, load, save, DATA_MAGIC, DATA_VERSION};
pub use generate::{generate_dataset, rollout_episode};
pub use window::{lam_windows, LamBatch, LamBatcher, WindowRef};
