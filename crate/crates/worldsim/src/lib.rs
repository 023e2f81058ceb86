//! Synthetic continuous-control tasks.
//!
//! * `point-reach`: a 2-D point mass with velocity control. Observation
//!   `[p, v, g]` (6 dims).
//! * `reacher-2link`: a planar two-link arm with joint-velocity damping.
//!   Observation `[cos q, sin q, q̇, g]` (8 dims).
//!
//! Actions live in `[-1, 1]^2`. Both tasks succeed when the controlled
//! point comes within `success_radius` of the goal; success latches for
//! the rest of the episode.

mod behavior;
mod env;

pub use behavior::{expert_action, BehaviorKind, BehaviorPolicy};
pub use env::{reset, step, EnvKind, EnvSpec, EnvState, GOAL_BOX, START_BOX};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("non-finite action {0:?}")]
    NonFiniteAction(Vec<f64>),
    #[error("action has {found} components, environment expects {expected}")]
    ActionDim { expected: usize, found: usize },
    #[error("environment kind mismatch: spec is {spec:?}, state is {state:?}")]
    KindMismatch { spec: EnvKind, state: EnvKind },
    #[error("unknown environment `{0}` (expected point-reach or reacher-2link)")]
    UnknownEnv(String),
    #[error("unknown behavior policy `{0}` (expected expert, random, noisy-expert:<sigma> or play:<k>)")]
    UnknownBehavior(String),
    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
