use std::fmt;
use std::str::FromStr;

use clam_numerics::rng::Rng;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::{EnvKind, EnvSpec, EnvState, GOAL_BOX};
use crate::{Result, SimError};

/// Scripted PD controller toward `state.goal`, clamped to `[-1, 1]`.
///
/// Point-reach: `a = kp (g - p) - kd v`. Reacher: task-space spring
/// `kp (g - x)` mapped through the Jacobian transpose, plus joint damping
/// `-kd q̇`.
pub fn expert_action(spec: &EnvSpec, state: &EnvState) -> [f64; 2] {
    expert_toward(spec, state, state.goal)
}

fn expert_toward(spec: &EnvSpec, state: &EnvState, target: [f64; 2]) -> [f64; 2] {
    let raw = match state.kind {
        EnvKind::PointReach => [
            spec.kp * (target[0] - state.pos[0]) - spec.kd * state.vel[0],
            spec.kp * (target[1] - state.pos[1]) - spec.kd * state.vel[1],
        ],
        EnvKind::Reacher2Link => {
            let x = spec.end_effector(state.pos);
            let j = spec.jacobian(state.pos);
            let f = [spec.kp * (target[0] - x[0]), spec.kp * (target[1] - x[1])];
            [
                j[0][0] * f[0] + j[1][0] * f[1] - spec.kd * state.vel[0],
                j[0][1] * f[0] + j[1][1] * f[1] - spec.kd * state.vel[1],
            ]
        }
    };
    [raw[0].clamp(-1.0, 1.0), raw[1].clamp(-1.0, 1.0)]
}

/// Data-collection policy family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BehaviorKind {
    Expert,
    Random,
    NoisyExpert { sigma: f64 },
    /// Expert toward a random waypoint that is resampled every `k` steps.
    Play { k: usize },
}

impl BehaviorKind {
    pub fn is_expert(&self) -> bool {
        matches!(self, BehaviorKind::Expert)
    }

    /// Compact tag stored in datasets, e.g. `noisy-expert:0.3`.
    pub fn tag(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for BehaviorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BehaviorKind::Expert => write!(f, "expert"),
            BehaviorKind::Random => write!(f, "random"),
            BehaviorKind::NoisyExpert { sigma } => write!(f, "noisy-expert:{sigma}"),
            BehaviorKind::Play { k } => write!(f, "play:{k}"),
        }
    }
}

impl FromStr for BehaviorKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || SimError::UnknownBehavior(s.to_string());
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        match (name, arg) {
            ("expert", None) => Ok(BehaviorKind::Expert),
            ("random", None) => Ok(BehaviorKind::Random),
            ("noisy-expert", Some(a)) => {
                let sigma: f64 = a.parse().map_err(|_| bad())?;
                if !(sigma >= 0.0) || !sigma.is_finite() {
                    return Err(bad());
                }
                Ok(BehaviorKind::NoisyExpert { sigma })
            }
            ("play", Some(a)) => {
                let k: usize = a.parse().map_err(|_| bad())?;
                if k == 0 {
                    return Err(bad());
                }
                Ok(BehaviorKind::Play { k })
            }
            _ => Err(bad()),
        }
    }
}

/// Stateful behaviour policy for one episode.
pub struct BehaviorPolicy {
    kind: BehaviorKind,
    rng: Rng,
    waypoint: Option<[f64; 2]>,
    waypoints_used: usize,
}

impl BehaviorPolicy {
    pub fn new(kind: BehaviorKind, rng: Rng) -> Self {
        BehaviorPolicy {
            kind,
            rng,
            waypoint: None,
            waypoints_used: 0,
        }
    }

    pub fn kind(&self) -> BehaviorKind {
        self.kind
    }

    pub fn current_waypoint(&self) -> Option<[f64; 2]> {
        self.waypoint
    }

    pub fn waypoints_used(&self) -> usize {
        self.waypoints_used
    }

    pub fn act(&mut self, spec: &EnvSpec, state: &EnvState) -> [f64; 2] {
        match self.kind {
            BehaviorKind::Expert => expert_action(spec, state),
            BehaviorKind::Random => [
                self.rng.random_range(-1.0..=1.0),
                self.rng.random_range(-1.0..=1.0),
            ],
            BehaviorKind::NoisyExpert { sigma } => {
                let a = expert_action(spec, state);
                if sigma == 0.0 {
                    return a;
                }
                let noise = Normal::new(0.0, sigma).expect("sigma validated");
                [
                    (a[0] + noise.sample(&mut self.rng)).clamp(-1.0, 1.0),
                    (a[1] + noise.sample(&mut self.rng)).clamp(-1.0, 1.0),
                ]
            }
            BehaviorKind::Play { k } => {
                if self.waypoint.is_none() || state.t % k == 0 {
                    self.waypoint = Some(self.sample_waypoint(spec));
                    self.waypoints_used += 1;
                }
                expert_toward(spec, state, self.waypoint.unwrap())
            }
        }
    }

    fn sample_waypoint(&mut self, spec: &EnvSpec) -> [f64; 2] {
        match spec.kind {
            EnvKind::PointReach => [
                self.rng.random_range(-GOAL_BOX..GOAL_BOX),
                self.rng.random_range(-GOAL_BOX..GOAL_BOX),
            ],
            EnvKind::Reacher2Link => {
                let reach = spec.link_lengths[0] + spec.link_lengths[1];
                let r = reach * self.rng.random_range(0.0f64..1.0).sqrt();
                let angle = self.rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                [r * angle.cos(), r * angle.sin()]
            }
        }
    }
}
