use std::path::Path;

use clam_numerics::{rng, Tensor};
use clam_worldsim::{expert_action, reset, step, EnvSpec, EnvState};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::{PolicyError, Result};

/// Anything that maps a batch of observations `[B, obs_dim]` to actions
/// `[B, action_dim]`. Only observations are passed in; no ground-truth
/// actions are available at inference.
pub trait Controller {
    fn act_batch(&mut self, obs: &Tensor) -> Result<Tensor>;
}

/// The frozen PD controller, acting from observations.
pub struct ScriptedExpert {
    pub spec: EnvSpec,
}

impl Controller for ScriptedExpert {
    fn act_batch(&mut self, obs: &Tensor) -> Result<Tensor> {
        let mut out = Vec::with_capacity(obs.shape()[0] * 2);
        for row in obs.data().chunks(self.spec.obs_dim()) {
            let s = EnvState::from_observation(&self.spec, row, 0)?;
            out.extend(expert_action(&self.spec, &s).iter().map(|&a| a as f32));
        }
        Ok(Tensor::new([obs.shape()[0], self.spec.action_dim()], out)?)
    }
}

/// Uniform actions in `[-1, 1]`.
pub struct RandomController {
    action_dim: usize,
    rng: rng::Rng,
}

impl RandomController {
    pub fn new(action_dim: usize, seed: u64) -> Self {
        RandomController {
            action_dim,
            rng: rng::labelled(seed, "random-controller"),
        }
    }
}

impl Controller for RandomController {
    fn act_batch(&mut self, obs: &Tensor) -> Result<Tensor> {
        let b = obs.shape()[0];
        let d = self.action_dim;
        Ok(Tensor::from_fn([b, d], |_| self.rng.random_range(-1.0f32..=1.0)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean first-success step over successful episodes; the step budget
    /// when none succeed.
    pub mean_steps: f64,
    /// First-success step per episode.
    pub steps_to_success: Vec<Option<usize>>,
}

/// Seeded rollouts, all episodes stepped in lockstep. An episode stops at
/// its first success (success latches) or after `horizon - 1` actions.
pub fn evaluate(controller: &mut dyn Controller, spec: &EnvSpec, n_episodes: usize, seed: u64) -> Result<EvalReport> {
    if n_episodes == 0 {
        return Err(PolicyError::Config("evaluation needs at least one episode".into()));
    }
    let mut states: Vec<EnvState> = (0..n_episodes)
        .map(|i| reset(spec, rng::derive_indexed(seed, "eval-episode", i as u64)))
        .collect();
    let mut first: Vec<Option<usize>> = states.iter().map(|s| s.succeeded.then_some(0)).collect();
    let d = spec.obs_dim();
    for t in 1..spec.horizon {
        let active: Vec<usize> = (0..n_episodes).filter(|&i| first[i].is_none()).collect();
        if active.is_empty() {
            break;
        }
        let mut obs = Vec::with_capacity(active.len() * d);
        for &i in &active {
            obs.extend(states[i].observation());
        }
        let actions = controller.act_batch(&Tensor::new([active.len(), d], obs)?)?;
        let a_dim = spec.action_dim();
        if actions.shape() != [active.len(), a_dim] {
            return Err(PolicyError::Dim {
                what: "controller output",
                expected: a_dim,
                found: actions.last_dim(),
            });
        }
        for (k, &i) in active.iter().enumerate() {
            let a: Vec<f64> = actions.row(k).iter().map(|&x| x as f64).collect();
            let (next, success) = step(spec, &states[i], &a)?;
            states[i] = next;
            if success {
                first[i] = Some(t);
            }
        }
    }
    let successes = first.iter().filter(|f| f.is_some()).count();
    let mean_steps = if successes == 0 {
        (spec.horizon - 1) as f64
    } else {
        first.iter().flatten().sum::<usize>() as f64 / successes as f64
    };
    Ok(EvalReport {
        episodes: n_episodes,
        successes,
        success_rate: successes as f64 / n_episodes as f64,
        mean_steps,
        steps_to_success: first,
    })
}

pub const EVAL_HEADER: [&str; 5] = ["method", "seed", "episodes", "success_rate", "mean_steps"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: String,
    pub seed: u64,
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_steps: f64,
}

impl EvalRow {
    pub fn new(method: impl Into<String>, seed: u64, report: &EvalReport) -> Self {
        EvalRow {
            method: method.into(),
            seed,
            episodes: report.episodes,
            success_rate: report.success_rate,
            mean_steps: report.mean_steps,
        }
    }
}

/// `method,seed,episodes,success_rate,mean_steps`.
pub fn write_eval_csv(path: &Path, rows: &[EvalRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(EVAL_HEADER)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_eval_csv(path: &Path) -> Result<Vec<EvalRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != EVAL_HEADER {
        return Err(PolicyError::Config(format!("unexpected evaluation header {header:?}")));
    }
    Ok(r.deserialize().collect::<std::result::Result<Vec<EvalRow>, _>>()?)
}
