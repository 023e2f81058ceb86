use clam_numerics::rng::Rng;
use clam_numerics::Tensor;
use rand::Rng as _;

use crate::{DataError, Dataset, Result};

/// Address of the transition `o_t -> o_{t+1}` in trajectory `traj`.
/// `padded` marks windows whose context reaches before `o_0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct WindowRef {
    pub traj: usize,
    pub t: usize,
    pub padded: bool,
}

/// Every intra-episode window with `h` steps of past context, in
/// (trajectory, t) order. A `T`-step trajectory contributes `T - 1`.
pub fn lam_windows(dataset: &Dataset, h: usize) -> Vec<WindowRef> {
    let mut out = Vec::with_capacity(dataset.num_transitions());
    for (traj, tr) in dataset.trajectories().iter().enumerate() {
        for t in 0..tr.transitions() {
            out.push(WindowRef { traj, t, padded: t < h });
        }
    }
    out
}

/// A batch of context windows.
#[derive(Clone, Debug)]
pub struct LamBatch {
    /// `[B, h + 2, obs_dim]`: rows `o_{t-h} .. o_t, o_{t+1}`, with rows
    /// before the episode start repeating `o_0`.
    pub context: Tensor,
    /// `[B, action_dim]` true actions `a_t`, if the dataset has them.
    pub actions: Option<Tensor>,
    /// `[B, latent_dim]` stored latent actions, if present.
    pub latents: Option<Tensor>,
    pub refs: Vec<WindowRef>,
}

impl LamBatch {
    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    /// Assembles the windows at `refs`.
    pub fn gather(dataset: &Dataset, h: usize, refs: &[WindowRef]) -> LamBatch {
        let d = dataset.obs_dim();
        let rows = h + 2;
        let mut context = Vec::with_capacity(refs.len() * rows * d);
        let has_actions = dataset.trajectories().iter().all(|t| t.actions.is_some());
        let has_latents = dataset.latent_dim() > 0 && dataset.trajectories().iter().all(|t| t.latent_actions.is_some());
        let mut actions = Vec::new();
        let mut latents = Vec::new();
        for r in refs {
            let tr = &dataset.trajectories()[r.traj];
            for k in 0..rows {
                let idx = (r.t + k).saturating_sub(h);
                context.extend_from_slice(tr.obs(idx));
            }
            if has_actions {
                actions.extend_from_slice(tr.action(r.t).unwrap());
            }
            if has_latents {
                latents.extend_from_slice(tr.latent(r.t).unwrap());
            }
        }
        let b = refs.len();
        LamBatch {
            context: Tensor::new(vec![b, rows, d], context).expect("window buffer sized"),
            actions: has_actions
                .then(|| Tensor::new(vec![b, dataset.action_dim()], actions).expect("action buffer sized")),
            latents: has_latents
                .then(|| Tensor::new(vec![b, dataset.latent_dim()], latents).expect("latent buffer sized")),
            refs: refs.to_vec(),
        }
    }
}

/// Uniform with-replacement sampler over the windows of one dataset.
pub struct LamBatcher<'a> {
    dataset: &'a Dataset,
    h: usize,
    batch_size: usize,
    windows: Vec<WindowRef>,
    rng: Rng,
}

impl<'a> LamBatcher<'a> {
    /// Padded windows are skipped unless `include_padded` is set.
    pub fn new(dataset: &'a Dataset, h: usize, batch_size: usize, include_padded: bool, rng: Rng) -> Result<Self> {
        if batch_size == 0 {
            return Err(DataError::InvalidArgument("batch_size must be at least 1".into()));
        }
        let windows: Vec<WindowRef> = lam_windows(dataset, h)
            .into_iter()
            .filter(|w| include_padded || !w.padded)
            .collect();
        if windows.is_empty() {
            return Err(DataError::Empty);
        }
        Ok(LamBatcher {
            dataset,
            h,
            batch_size,
            windows,
            rng,
        })
    }

    pub fn num_windows(&self) -> usize {
        self.windows.len()
    }

    pub fn next_refs(&mut self) -> Vec<WindowRef> {
        (0..self.batch_size)
            .map(|_| self.windows[self.rng.random_range(0..self.windows.len())])
            .collect()
    }

    pub fn next_batch(&mut self) -> LamBatch {
        let refs = self.next_refs();
        LamBatch::gather(self.dataset, self.h, &refs)
    }
}

impl Iterator for LamBatcher<'_> {
    type Item = LamBatch;

    fn next(&mut self) -> Option<LamBatch> {
        Some(self.next_batch())
    }
}
