use clam_numerics::rng;
use clam_worldsim::{reset, step, BehaviorKind, BehaviorPolicy, EnvSpec};

use crate::{DataError, Dataset, Result, Role, Trajectory};

/// Attempts per requested episode before expert generation gives up.
const EXPERT_ATTEMPT_FACTOR: usize = 10;

/// Runs one full-horizon episode from `episode_seed`, recording actions.
pub fn rollout_episode(spec: &EnvSpec, kind: BehaviorKind, episode_seed: u64) -> Result<Trajectory> {
    let mut state = reset(spec, episode_seed);
    let mut policy = BehaviorPolicy::new(kind, rng::labelled(episode_seed, "behavior"));
    let mut observations = Vec::with_capacity(spec.horizon * spec.obs_dim());
    let mut actions = Vec::with_capacity((spec.horizon - 1) * spec.action_dim());
    observations.extend(state.observation());
    for _ in 1..spec.horizon {
        let a = policy.act(spec, &state);
        state = step(spec, &state, &a)?.0;
        actions.extend(a.iter().map(|&x| x as f32));
        observations.extend(state.observation());
    }
    Ok(Trajectory {
        obs_dim: spec.obs_dim(),
        observations,
        actions: Some(actions),
        latent_actions: None,
        success: state.succeeded,
        seed: episode_seed,
        policy_kind: kind.tag(),
    })
}

/// Rolls out `n_traj` episodes with seeds derived from `seed` and the
/// attempt index, so a smaller dataset is a prefix of a larger one.
///
/// Expert data keep only successful episodes and come back tagged
/// `unlabeled-expert` (actions are still recorded for diagnostics); every
/// other behaviour yields a `labeled` dataset.
pub fn generate_dataset(spec: &EnvSpec, kind: BehaviorKind, n_traj: usize, seed: u64) -> Result<Dataset> {
    if n_traj == 0 {
        return Err(DataError::InvalidArgument("n_traj must be at least 1".into()));
    }
    spec.validate()?;
    let base = rng::derive(seed, "episodes");
    let mut trajectories = Vec::with_capacity(n_traj);
    let max_attempts = if kind.is_expert() { EXPERT_ATTEMPT_FACTOR * n_traj } else { n_traj };
    let mut attempt = 0;
    while trajectories.len() < n_traj {
        if attempt == max_attempts {
            return Err(DataError::ExpertUnattainable {
                wanted: n_traj,
                successes: trajectories.len(),
                attempts: attempt,
            });
        }
        let tr = rollout_episode(spec, kind, rng::derive_indexed(base, "episode", attempt as u64))?;
        attempt += 1;
        if kind.is_expert() && !tr.success {
            continue;
        }
        trajectories.push(tr);
    }
    let role = if kind.is_expert() { Role::UnlabeledExpert } else { Role::Labeled };
    Dataset::new(role, spec.spec_hash(), spec.obs_dim(), spec.action_dim(), 0, trajectories)
}
