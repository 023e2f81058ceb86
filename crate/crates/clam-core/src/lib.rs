//! Latent action model (LAM): a latent inverse dynamics model (IDM) that
//! infers `z_t` from a window of observations, a latent forward dynamics
//! model (FDM) that predicts `o_{t+1}` from context and `z_t`, and an
//! action decoder grounding `z_t` in environment actions.

mod config;
mod diagnostics;
mod error;
mod losses;
mod model;
mod relabel;
mod train;
mod vq;

pub use config::{LamConfig, LatentMode, Trunk};
pub use diagnostics::{degeneracy_report, mlp_probe_r2, ridge_r2, DegeneracyReport, COPY_WARNING_R2, MIN_DIAGNOSTIC_SAMPLES};
pub use error::{CoreError, Result};
pub use losses::{clam_losses, LossBreakdown, LossEvaluation};
pub use model::{LamMeta, LamModel};
pub use relabel::relabel;
pub use train::{
    read_metrics_csv, train_lam, write_decoder_fit_csv, write_metrics_csv, StepMetrics, TrainReport,
    METRICS_HEADER,
};
pub use vq::{nearest_code, vq_quantize, VqOutput};
