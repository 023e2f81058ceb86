use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{DataError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    UnlabeledExpert,
    Labeled,
    RelabeledExpert,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::UnlabeledExpert => "unlabeled-expert",
            Role::Labeled => "labeled",
            Role::RelabeledExpert => "relabeled-expert",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Role::UnlabeledExpert => 0,
            Role::Labeled => 1,
            Role::RelabeledExpert => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Role> {
        match tag {
            0 => Some(Role::UnlabeledExpert),
            1 => Some(Role::Labeled),
            2 => Some(Role::RelabeledExpert),
            _ => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Role {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self> {
        [Role::UnlabeledExpert, Role::Labeled, Role::RelabeledExpert]
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| DataError::InvalidArgument(format!("unknown role `{s}`")))
    }
}

/// One episode. Buffers are row-major: `observations` is `len × obs_dim`,
/// `actions` and `latent_actions` have `len - 1` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub obs_dim: usize,
    pub observations: Vec<f32>,
    pub actions: Option<Vec<f32>>,
    pub latent_actions: Option<Vec<f32>>,
    pub success: bool,
    pub seed: u64,
    pub policy_kind: String,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.observations.len() / self.obs_dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn transitions(&self) -> usize {
        self.len().saturating_sub(1)
    }

    pub fn obs(&self, t: usize) -> &[f32] {
        &self.observations[t * self.obs_dim..(t + 1) * self.obs_dim]
    }

    pub fn action(&self, t: usize) -> Option<&[f32]> {
        let rows = self.transitions();
        self.actions.as_ref().map(|a| {
            let d = a.len() / rows;
            &a[t * d..(t + 1) * d]
        })
    }

    pub fn latent(&self, t: usize) -> Option<&[f32]> {
        let rows = self.transitions();
        self.latent_actions.as_ref().map(|z| {
            let d = z.len() / rows;
            &z[t * d..(t + 1) * d]
        })
    }

    fn check(&self, index: usize, action_dim: usize, latent_dim: usize) -> Result<()> {
        let bad = |msg: String| Err(DataError::Invariant(format!("trajectory {index}: {msg}")));
        if self.obs_dim == 0 || self.observations.len() % self.obs_dim != 0 {
            return bad(format!(
                "observation buffer of {} values is not a multiple of obs_dim {}",
                self.observations.len(),
                self.obs_dim
            ));
        }
        let t = self.len();
        if t < 2 {
            return bad(format!("{t} observations, need at least 2"));
        }
        if let Some(a) = &self.actions {
            if a.len() != (t - 1) * action_dim {
                return bad(format!("{} action values, expected {}", a.len(), (t - 1) * action_dim));
            }
        }
        if let Some(z) = &self.latent_actions {
            if latent_dim == 0 || z.len() != (t - 1) * latent_dim {
                return bad(format!("{} latent values, expected {}", z.len(), (t - 1) * latent_dim));
            }
        }
        Ok(())
    }
}

/// A role-tagged collection of trajectories from one environment spec.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    role: Role,
    env_hash: u64,
    obs_dim: usize,
    action_dim: usize,
    latent_dim: usize,
    trajectories: Vec<Trajectory>,
}

impl Dataset {
    /// Builds a dataset, enforcing the role invariants: labeled data carry
    /// actions everywhere, relabeled data carry latents everywhere.
    /// `latent_dim` is 0 when no trajectory carries latents.
    pub fn new(
        role: Role,
        env_hash: u64,
        obs_dim: usize,
        action_dim: usize,
        latent_dim: usize,
        trajectories: Vec<Trajectory>,
    ) -> Result<Self> {
        let ds = Dataset {
            role,
            env_hash,
            obs_dim,
            action_dim,
            latent_dim,
            trajectories,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trajectories.is_empty() {
            return Err(DataError::Empty);
        }
        for (i, tr) in self.trajectories.iter().enumerate() {
            if tr.obs_dim != self.obs_dim {
                return Err(DataError::Invariant(format!(
                    "trajectory {i}: obs_dim {} differs from dataset obs_dim {}",
                    tr.obs_dim, self.obs_dim
                )));
            }
            tr.check(i, self.action_dim, self.latent_dim)?;
            match self.role {
                Role::Labeled if tr.actions.is_none() => {
                    return Err(DataError::Invariant(format!(
                        "labeled dataset: trajectory {i} has no actions"
                    )))
                }
                Role::RelabeledExpert if tr.latent_actions.is_none() => {
                    return Err(DataError::Invariant(format!(
                        "relabeled-expert dataset: trajectory {i} has no latent actions"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn env_hash(&self) -> u64 {
        self.env_hash
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn num_transitions(&self) -> usize {
        self.trajectories.iter().map(Trajectory::transitions).sum()
    }

    /// Re-tags the dataset, re-checking the new role's invariants.
    pub fn with_role(mut self, role: Role) -> Result<Self> {
        self.role = role;
        self.validate()?;
        Ok(self)
    }

    /// First `n` trajectories (datasets generated from one seed nest).
    pub fn take(&self, n: usize) -> Result<Self> {
        let mut out = self.clone();
        out.trajectories.truncate(n);
        out.validate()?;
        Ok(out)
    }

    /// Drops true actions, e.g. to present expert data as action-free.
    pub fn without_actions(mut self) -> Result<Self> {
        if self.role == Role::Labeled {
            return Err(DataError::Invariant("cannot strip actions from a labeled dataset".into()));
        }
        for tr in &mut self.trajectories {
            tr.actions = None;
        }
        Ok(self)
    }

    /// Copy with actions and latents removed, tagged `unlabeled-expert`.
    pub fn observations_only(&self) -> Self {
        let mut out = self.clone();
        out.role = Role::UnlabeledExpert;
        out.latent_dim = 0;
        for tr in &mut out.trajectories {
            tr.actions = None;
            tr.latent_actions = None;
        }
        out
    }

    /// Attaches per-transition latents, producing a relabeled-expert dataset.
    pub fn with_latents(mut self, latent_dim: usize, latents: Vec<Vec<f32>>) -> Result<Self> {
        if latents.len() != self.trajectories.len() {
            return Err(DataError::Invariant(format!(
                "{} latent buffers for {} trajectories",
                latents.len(),
                self.trajectories.len()
            )));
        }
        for (tr, z) in self.trajectories.iter_mut().zip(latents) {
            tr.latent_actions = Some(z);
        }
        self.latent_dim = latent_dim;
        self.role = Role::RelabeledExpert;
        self.validate()?;
        Ok(self)
    }

    /// Replaces actions with pseudo-labels (same shape rules as true actions).
    pub fn with_actions(mut self, actions: Vec<Vec<f32>>) -> Result<Self> {
        if actions.len() != self.trajectories.len() {
            return Err(DataError::Invariant(format!(
                "{} action buffers for {} trajectories",
                actions.len(),
                self.trajectories.len()
            )));
        }
        for (tr, a) in self.trajectories.iter_mut().zip(actions) {
            tr.actions = Some(a);
        }
        self.role = Role::Labeled;
        self.validate()?;
        Ok(self)
    }

    /// Union of two datasets from the same environment, keeping `self`'s role.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        if self.env_hash != other.env_hash || self.obs_dim != other.obs_dim {
            return Err(DataError::Invariant("cannot concatenate datasets from different environments".into()));
        }
        let mut out = self.clone();
        out.trajectories.extend(other.trajectories.iter().cloned());
        if out.latent_dim != other.latent_dim {
            out.latent_dim = 0;
            for tr in &mut out.trajectories {
                tr.latent_actions = None;
            }
        }
        out.validate()?;
        Ok(out)
    }
}
