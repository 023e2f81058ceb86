use clam_neural::TransformerSpec;
use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Trunk {
    Mlp { hidden_dims: Vec<usize> },
    Transformer(TransformerSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LatentMode {
    Continuous,
    Vq { codebook_size: usize, commitment: f64 },
}

impl LatentMode {
    pub fn vq() -> Self {
        LatentMode::Vq {
            codebook_size: 64,
            commitment: 0.25,
        }
    }

    pub fn is_vq(&self) -> bool {
        matches!(self, LatentMode::Vq { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LamConfig {
    pub latent_dim: usize,
    /// Past observations beyond `o_t` seen by the IDM and FDM.
    pub context: usize,
    pub trunk: Trunk,
    pub decoder_hidden_dims: Vec<usize>,
    pub beta: f64,
    pub latent_mode: LatentMode,
    /// Interleave decoder updates with reconstruction updates. When false,
    /// the LAM trains on reconstruction alone and the decoder is fitted
    /// afterwards on frozen latents.
    pub joint_training: bool,
    /// In joint decoder updates, also backpropagate into the IDM.
    pub decoder_updates_idm: bool,
    /// Labeled updates per unlabeled update.
    pub labeled_ratio: usize,
    pub batch_size: usize,
    pub labeled_batch_size: usize,
    pub steps: usize,
    /// Decoder-only steps after a no-joint LAM run.
    pub decoder_fit_steps: usize,
    pub lr: f64,
    /// Sample windows whose context reaches before the episode start.
    pub include_padded: bool,
    /// Also reconstruct the labeled trajectories' observations.
    pub recon_on_labeled: bool,
}

impl Default for LamConfig {
    fn default() -> Self {
        LamConfig {
            latent_dim: 4,
            context: 1,
            trunk: Trunk::Mlp {
                hidden_dims: vec![256, 256],
            },
            decoder_hidden_dims: vec![128, 128],
            beta: 1.0,
            latent_mode: LatentMode::Continuous,
            joint_training: true,
            decoder_updates_idm: true,
            labeled_ratio: 1,
            batch_size: 128,
            labeled_batch_size: 128,
            steps: 3000,
            decoder_fit_steps: 3000,
            lr: 1e-3,
            include_padded: false,
            recon_on_labeled: true,
        }
    }
}

impl LamConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(CoreError::Config(m.to_string()));
        if self.latent_dim == 0 {
            return fail("latent_dim must be at least 1");
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return fail("beta must be a finite non-negative number");
        }
        if let LatentMode::Vq { codebook_size, commitment } = self.latent_mode {
            if codebook_size < 2 {
                return fail("vq codebook_size must be at least 2");
            }
            if !(commitment >= 0.0) {
                return fail("vq commitment must be non-negative");
            }
        }
        if self.batch_size == 0 || self.labeled_batch_size == 0 {
            return fail("batch sizes must be positive");
        }
        if self.labeled_ratio == 0 {
            return fail("labeled_ratio must be at least 1");
        }
        if !(self.lr > 0.0) {
            return fail("lr must be positive");
        }
        match &self.trunk {
            Trunk::Mlp { hidden_dims } if hidden_dims.iter().any(|&h| h == 0) => {
                return fail("mlp hidden dims must be positive")
            }
            Trunk::Transformer(spec) => {
                spec.validate()?;
                if spec.max_sequence_len < self.context + 2 {
                    return fail("transformer max_sequence_len shorter than the context window");
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Observations per IDM window.
    pub fn window_len(&self) -> usize {
        self.context + 2
    }
}
