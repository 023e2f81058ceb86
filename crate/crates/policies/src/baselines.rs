use std::path::Path;

use clam_core::{relabel, train_lam, LamConfig, LatentMode, TrainReport};
use clam_datastore::{lam_windows, Dataset, LamBatch};
use clam_neural::{Mlp, MlpSpec};
use clam_numerics::{rng, ParamStore, Tensor};

use crate::eval::Controller;
use crate::latent::{load_meta, save_meta, train_latent_policy, ClamAgent, PolicyConfig};
use crate::regress::{fit, mse, predict, Pairs};
use crate::{PolicyError, Result};

/// Direct `o_t -> a_t` policy with a tanh head.
#[derive(Clone, Debug)]
pub struct BcPolicy {
    pub store: ParamStore,
    mlp: Mlp,
}

impl BcPolicy {
    fn new(obs_dim: usize, action_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let spec = MlpSpec::new(obs_dim, hidden.to_vec(), action_dim).with_tanh();
        let mlp = Mlp::new(&mut store, "policy", spec, &mut rng::labelled(seed, "bc-init"))?;
        Ok(BcPolicy { store, mlp })
    }

    pub fn obs_dim(&self) -> usize {
        self.mlp.spec.input_dim
    }

    pub fn action_dim(&self) -> usize {
        self.mlp.spec.output_dim
    }

    pub fn act(&self, obs: &Tensor) -> Result<Tensor> {
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
        save_meta(path, "bc", &self.mlp, &self.store)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (meta, store) = load_meta(path, "bc")?;
        let spec = MlpSpec::new(meta.obs_dim, meta.hidden_dims, meta.out_dim).with_tanh();
        let mlp = Mlp::bind(&store, "policy", spec)?;
        Ok(BcPolicy { store, mlp })
    }
}

impl Controller for BcPolicy {
    fn act_batch(&mut self, obs: &Tensor) -> Result<Tensor> {
        self.act(obs)
    }
}

/// Behaviour cloning on the action-labeled dataset.
pub fn train_bc_al(labeled: &Dataset, config: &PolicyConfig, seed: u64) -> Result<(BcPolicy, Vec<f32>)> {
    config.validate()?;
    let mut data = Pairs::new(labeled.obs_dim(), labeled.action_dim());
    for tr in labeled.trajectories() {
        for t in 0..tr.transitions() {
            data.push(tr.obs(t), tr.action(t).ok_or(PolicyError::MissingLabels("actions"))?);
        }
    }
    let mut policy = BcPolicy::new(labeled.obs_dim(), labeled.action_dim(), &config.hidden_dims, seed)?;
    let mlp = policy.mlp.clone();
    let losses = fit(
        &mut policy.store,
        &mlp,
        &data,
        config.steps,
        config.batch_size,
        config.lr,
        &mut rng::labelled(seed, "bc-batches"),
    )?;
    Ok((policy, losses))
}

#[derive(Clone, Debug)]
pub struct VptReport {
    /// Supervised IDM loss per step.
    pub idm_losses: Vec<f32>,
    /// IDM action MSE on held-out labeled trajectories (the training set
    /// when there is only one trajectory).
    pub idm_val_mse: f32,
    /// Expert data with IDM-predicted actions.
    pub pseudo_labeled: Dataset,
    pub bc_losses: Vec<f32>,
}

fn window_pairs(ds: &Dataset, h: usize, traj_range: std::ops::Range<usize>) -> Result<Pairs> {
    let w = (h + 2) * ds.obs_dim();
    let refs: Vec<_> = lam_windows(ds, h)
        .into_iter()
        .filter(|r| traj_range.contains(&r.traj))
        .collect();
    let batch = LamBatch::gather(ds, h, &refs);
    let actions = batch.actions.ok_or(PolicyError::MissingLabels("actions"))?;
    Ok(Pairs {
        x: batch.context.into_data(),
        in_dim: w,
        y: actions.into_data(),
        out_dim: ds.action_dim(),
    })
}

/// Supervised IDM on true actions over `(H + 2)`-observation windows,
/// pseudo-labels the expert data, then behaviour-clones the result.
pub fn train_vpt(
    labeled: &Dataset,
    expert: &Dataset,
    context: usize,
    config: &PolicyConfig,
    seed: u64,
) -> Result<(BcPolicy, VptReport)> {
    config.validate()?;
    if labeled.env_hash() != expert.env_hash() {
        return Err(clam_core::CoreError::SpecMismatch {
            expected: labeled.env_hash(),
            found: expert.env_hash(),
        }
        .into());
    }
    let n = labeled.len();
    let n_val = if n >= 2 { (n / 10).max(1) } else { 0 };
    let train = window_pairs(labeled, context, 0..n - n_val)?;
    let val = if n_val > 0 { window_pairs(labeled, context, n - n_val..n)? } else { window_pairs(labeled, context, 0..n)? };

    let mut store = ParamStore::new();
    let spec = MlpSpec::new(train.in_dim, config.hidden_dims.clone(), labeled.action_dim()).with_tanh();
    let idm = Mlp::new(&mut store, "vpt_idm", spec, &mut rng::labelled(seed, "vpt-idm-init"))?;
    let idm_losses = fit(
        &mut store,
        &idm,
        &train,
        config.steps,
        config.batch_size,
        config.lr,
        &mut rng::labelled(seed, "vpt-idm-batches"),
    )?;
    let val_pred = predict(&store, &idm, &Tensor::new([val.len(), val.in_dim], val.x.clone())?)?;
    let idm_val_mse = mse(val_pred.data(), &val.y);

    let a = expert.action_dim();
    let mut pseudo: Vec<Vec<f32>> = expert
        .trajectories()
        .iter()
        .map(|t| Vec::with_capacity(t.transitions() * a))
        .collect();
    let refs = lam_windows(expert, context);
    for chunk in refs.chunks(2048) {
        let batch = LamBatch::gather(expert, context, chunk);
        let b = chunk.len();
        let x = batch.context.reshape([b, (context + 2) * expert.obs_dim()])?;
        let out = predict(&store, &idm, &x)?;
        for (r, row) in chunk.iter().zip(out.data().chunks_exact(a)) {
            pseudo[r.traj].extend_from_slice(row);
        }
    }
    let pseudo_labeled = expert.clone().with_actions(pseudo)?;
    let (policy, bc_losses) = train_bc_al(&pseudo_labeled, config, rng::derive(seed, "vpt-bc"))?;
    Ok((
        policy,
        VptReport {
            idm_losses,
            idm_val_mse,
            pseudo_labeled,
            bc_losses,
        },
    ))
}

/// Everything produced by the two-stage latent pipeline.
pub struct ClamRun {
    pub agent: ClamAgent,
    pub lam_report: TrainReport,
    pub relabeled: Dataset,
    pub policy_losses: Vec<f32>,
}

/// LAM pretraining, relabeling of the expert data, latent policy fitting.
pub fn train_clam(
    lam_config: &LamConfig,
    expert: &Dataset,
    labeled: Option<&Dataset>,
    policy_config: &PolicyConfig,
    seed: u64,
) -> Result<ClamRun> {
    let (lam, lam_report) = train_lam(lam_config, expert, labeled, rng::derive(seed, "lam"))?;
    let relabeled = relabel(&lam, expert)?;
    let (policy, policy_losses) = train_latent_policy(&lam, &relabeled, policy_config, rng::derive(seed, "policy"))?;
    Ok(ClamRun {
        agent: ClamAgent::new(lam, policy)?,
        lam_report,
        relabeled,
        policy_losses,
    })
}

/// Discrete latents without joint training: the LAM learns from
/// reconstruction alone and the decoder is fitted afterwards on frozen
/// codes. Otherwise identical to [`train_clam`].
pub fn train_lapo_style(
    lam_config: &LamConfig,
    expert: &Dataset,
    labeled: &Dataset,
    policy_config: &PolicyConfig,
    seed: u64,
) -> Result<ClamRun> {
    let mut cfg = lam_config.clone();
    if !cfg.latent_mode.is_vq() {
        cfg.latent_mode = LatentMode::vq();
    }
    cfg.joint_training = false;
    if cfg.decoder_fit_steps == 0 {
        cfg.decoder_fit_steps = cfg.steps;
    }
    train_clam(&cfg, expert, Some(labeled), policy_config, seed)
}
