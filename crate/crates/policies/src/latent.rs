use std::path::Path;

use clam_core::LamModel;
use clam_datastore::Dataset;
use clam_neural::{read_checkpoint, write_checkpoint, Mlp, MlpSpec};
use clam_numerics::{rng, ParamStore, Tensor};
use serde::{Deserialize, Serialize};

use crate::eval::Controller;
use crate::regress::{fit, predict, Pairs};
use crate::{PolicyError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyInit {
    Fresh,
    /// Copy the `o_t` block of the IDM's first layer into the policy's
    /// first layer (MLP IDM with a matching first hidden width only).
    FromIdm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub hidden_dims: Vec<usize>,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub init: PolicyInit,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            hidden_dims: vec![256, 256],
            steps: 3000,
            batch_size: 256,
            lr: 1e-3,
            init: PolicyInit::Fresh,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(PolicyError::Config("policy hidden_dims must be non-empty and positive".into()));
        }
        if self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(PolicyError::Config("policy batch_size and lr must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyMeta {
    kind: String,
    obs_dim: usize,
    out_dim: usize,
    hidden_dims: Vec<usize>,
    tanh: bool,
}

/// `π(z_t | o_t)`: an MLP regressing latent actions from one observation.
#[derive(Clone, Debug)]
pub struct LatentPolicy {
    pub store: ParamStore,
    mlp: Mlp,
}

impl LatentPolicy {
    pub fn new(obs_dim: usize, latent_dim: usize, hidden_dims: &[usize], seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let spec = MlpSpec::new(obs_dim, hidden_dims.to_vec(), latent_dim);
        let mlp = Mlp::new(&mut store, "policy", spec, &mut rng::labelled(seed, "policy-init"))?;
        Ok(LatentPolicy { store, mlp })
    }

    pub fn obs_dim(&self) -> usize {
        self.mlp.spec.input_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.mlp.spec.output_dim
    }

    /// Copies the `o_t` rows of the IDM input layer. Returns whether
    /// anything was copied; an all-zero block leaves the fresh weights.
    pub fn init_from_idm(&mut self, lam: &LamModel) -> Result<bool> {
        let Some(w) = lam.idm_input_weight() else {
            return Ok(false);
        };
        let d = self.obs_dim();
        let hidden = self.mlp.spec.hidden_dims[0];
        if w.shape()[1] != hidden || d != lam.obs_dim() {
            return Ok(false);
        }
        let start = lam.config().context * d * hidden;
        let block = &w.data()[start..start + d * hidden];
        if block.iter().all(|&v| v == 0.0) {
            return Ok(false);
        }
        self.store
            .set_value(self.mlp.layers[0].weight, Tensor::new([d, hidden], block.to_vec())?)?;
        Ok(true)
    }

    /// Raw latent predictions for `[B, obs_dim]`.
    pub fn predict(&self, obs: &Tensor) -> Result<Tensor> {
        if obs.rank() != 2 || obs.last_dim() != self.obs_dim() {
            return Err(PolicyError::Dim {
                what: "policy observation",
                expected: self.obs_dim(),
                found: obs.last_dim(),
            });
        }
        predict(&self.store, &self.mlp, obs)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_meta(path, "latent", &self.mlp, &self.store)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (meta, store) = load_meta(path, "latent")?;
        let mlp = Mlp::bind(&store, "policy", MlpSpec::new(meta.obs_dim, meta.hidden_dims, meta.out_dim))?;
        Ok(LatentPolicy { store, mlp })
    }
}

pub(crate) fn load_meta(path: &Path, kind: &str) -> Result<(PolicyMetaView, ParamStore)> {
    let (spec, store) = read_checkpoint(path)?;
    let meta: PolicyMeta = serde_json::from_str(&spec)
        .map_err(|e| PolicyError::Config(format!("checkpoint is not a policy: {e}")))?;
    if meta.kind != kind {
        return Err(PolicyError::Config(format!(
            "checkpoint holds a {} policy, expected {kind}",
            meta.kind
        )));
    }
    Ok((
        PolicyMetaView {
            obs_dim: meta.obs_dim,
            out_dim: meta.out_dim,
            hidden_dims: meta.hidden_dims,
        },
        store,
    ))
}

pub(crate) fn save_meta(path: &Path, kind: &str, mlp: &Mlp, store: &ParamStore) -> Result<()> {
    let meta = PolicyMeta {
        kind: kind.into(),
        obs_dim: mlp.spec.input_dim,
        out_dim: mlp.spec.output_dim,
        hidden_dims: mlp.spec.hidden_dims.clone(),
        tanh: mlp.spec.final_activation == clam_neural::FinalActivation::Tanh,
    };
    write_checkpoint(path, &serde_json::to_string(&meta).expect("meta serializes"), store)?;
    Ok(())
}

pub(crate) struct PolicyMetaView {
    pub obs_dim: usize,
    pub out_dim: usize,
    pub hidden_dims: Vec<usize>,
}

/// Regresses `z_t` from `o_t` on a relabeled dataset with MSE.
/// Returns the policy and its per-step loss.
pub fn train_latent_policy(
    lam: &LamModel,
    relabeled: &Dataset,
    config: &PolicyConfig,
    seed: u64,
) -> Result<(LatentPolicy, Vec<f32>)> {
    config.validate()?;
    if relabeled.latent_dim() != lam.latent_dim() {
        return Err(PolicyError::LatentDimMismatch {
            policy: relabeled.latent_dim(),
            lam: lam.latent_dim(),
        });
    }
    if relabeled.env_hash() != lam.env_hash() {
        return Err(clam_core::CoreError::SpecMismatch {
            expected: lam.env_hash(),
            found: relabeled.env_hash(),
        }
        .into());
    }
    let mut data = Pairs::new(relabeled.obs_dim(), lam.latent_dim());
    for tr in relabeled.trajectories() {
        for t in 0..tr.transitions() {
            data.push(tr.obs(t), tr.latent(t).ok_or(PolicyError::MissingLabels("latent actions"))?);
        }
    }
    let mut policy = LatentPolicy::new(relabeled.obs_dim(), lam.latent_dim(), &config.hidden_dims, seed)?;
    if config.init == PolicyInit::FromIdm {
        policy.init_from_idm(lam)?;
    }
    let mlp = policy.mlp.clone();
    let losses = fit(
        &mut policy.store,
        &mlp,
        &data,
        config.steps,
        config.batch_size,
        config.lr,
        &mut rng::labelled(seed, "policy-batches"),
    )?;
    Ok((policy, losses))
}

/// Latent policy plus the LAM whose decoder grounds its outputs.
#[derive(Clone, Debug)]
pub struct ClamAgent {
    pub lam: LamModel,
    pub policy: LatentPolicy,
}

impl ClamAgent {
    pub fn new(lam: LamModel, policy: LatentPolicy) -> Result<Self> {
        if policy.latent_dim() != lam.latent_dim() {
            return Err(PolicyError::LatentDimMismatch {
                policy: policy.latent_dim(),
                lam: lam.latent_dim(),
            });
        }
        if policy.obs_dim() != lam.obs_dim() {
            return Err(PolicyError::Dim {
                what: "policy observation",
                expected: lam.obs_dim(),
                found: policy.obs_dim(),
            });
        }
        Ok(ClamAgent { lam, policy })
    }

    /// `a = decode(π(o))`, snapping to the nearest code for VQ models.
    pub fn act(&self, obs: &Tensor) -> Result<Tensor> {
        let z = self.policy.predict(obs)?;
        let z = self.lam.snap(&z)?;
        Ok(self.lam.decode(&z)?)
    }
}

impl Controller for ClamAgent {
    fn act_batch(&mut self, obs: &Tensor) -> Result<Tensor> {
        self.act(obs)
    }
}
