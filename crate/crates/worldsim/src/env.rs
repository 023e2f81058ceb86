use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use clam_numerics::rng;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Result, SimError};

/// Point-reach start positions and both tasks' goals lie in `[-b, b]^2`.
pub const GOAL_BOX: f64 = 1.0;
pub const START_BOX: f64 = 1.0;

/// Reacher goals are sampled in this annulus around the base.
const REACHER_GOAL_RADIUS: (f64, f64) = (0.3, 0.9);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    PointReach,
    #[serde(rename = "reacher-2link")]
    Reacher2Link,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::PointReach => "point-reach",
            EnvKind::Reacher2Link => "reacher-2link",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point-reach" => Ok(EnvKind::PointReach),
            "reacher-2link" => Ok(EnvKind::Reacher2Link),
            other => Err(SimError::UnknownEnv(other.to_string())),
        }
    }
}

/// Full task description. `horizon` counts observations per episode, so a
/// full-length episode takes `horizon - 1` actions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub horizon: usize,
    pub dt: f64,
    pub success_radius: f64,
    /// Reacher link lengths.
    pub link_lengths: [f64; 2],
    /// Reacher joint-velocity damping.
    pub damping: f64,
    /// Expert proportional gain.
    pub kp: f64,
    /// Expert derivative gain.
    pub kd: f64,
}

impl EnvSpec {
    pub fn new(kind: EnvKind) -> Self {
        let (kp, kd) = match kind {
            EnvKind::PointReach => (1.0, 2.0),
            EnvKind::Reacher2Link => (8.0, 1.0),
        };
        EnvSpec {
            kind,
            horizon: 100,
            dt: 0.1,
            success_radius: 0.1,
            link_lengths: [0.5, 0.5],
            damping: 0.1,
            kp,
            kd,
        }
    }

    pub fn point_reach() -> Self {
        Self::new(EnvKind::PointReach)
    }

    pub fn reacher() -> Self {
        Self::new(EnvKind::Reacher2Link)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 10 {
            return Err(SimError::InvalidSpec(format!("horizon {} < 10", self.horizon)));
        }
        if !(self.dt > 0.0) || !(self.success_radius > 0.0) {
            return Err(SimError::InvalidSpec("dt and success_radius must be positive".into()));
        }
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        match self.kind {
            EnvKind::PointReach => 6,
            EnvKind::Reacher2Link => 8,
        }
    }

    pub fn action_dim(&self) -> usize {
        2
    }

    /// Stable 64-bit digest of the canonical JSON form.
    pub fn spec_hash(&self) -> u64 {
        let json = serde_json::to_string(self).expect("spec serializes");
        let digest = Sha256::digest(json.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    /// Forward kinematics of the arm tip.
    pub fn end_effector(&self, q: [f64; 2]) -> [f64; 2] {
        let [l1, l2] = self.link_lengths;
        [
            l1 * q[0].cos() + l2 * (q[0] + q[1]).cos(),
            l1 * q[0].sin() + l2 * (q[0] + q[1]).sin(),
        ]
    }

    /// Column-major Jacobian `d tip / d q` as rows `[[dx/dq1, dx/dq2], [dy/dq1, dy/dq2]]`.
    pub fn jacobian(&self, q: [f64; 2]) -> [[f64; 2]; 2] {
        let [l1, l2] = self.link_lengths;
        let (s1, c1) = q[0].sin_cos();
        let (s12, c12) = (q[0] + q[1]).sin_cos();
        [[-l1 * s1 - l2 * s12, -l2 * s12], [l1 * c1 + l2 * c12, l2 * c12]]
    }
}

/// Physical state. For point-reach `pos`/`vel` are the mass position and
/// velocity; for the reacher they are joint angles and joint velocities.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub kind: EnvKind,
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub goal: [f64; 2],
    pub t: usize,
    /// Latched success flag.
    pub succeeded: bool,
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

impl EnvState {
    pub fn observation(&self) -> Vec<f32> {
        let v: Vec<f64> = match self.kind {
            EnvKind::PointReach => vec![
                self.pos[0], self.pos[1], self.vel[0], self.vel[1], self.goal[0], self.goal[1],
            ],
            EnvKind::Reacher2Link => vec![
                self.pos[0].cos(),
                self.pos[1].cos(),
                self.pos[0].sin(),
                self.pos[1].sin(),
                self.vel[0],
                self.vel[1],
                self.goal[0],
                self.goal[1],
            ],
        };
        v.into_iter().map(|x| x as f32).collect()
    }

    /// Inverts `observation` (exact up to f32 rounding). `succeeded` is
    /// reset to the instantaneous success predicate.
    pub fn from_observation(spec: &EnvSpec, obs: &[f32], t: usize) -> Result<EnvState> {
        if obs.len() != spec.obs_dim() {
            return Err(SimError::InvalidSpec(format!(
                "observation has {} components, {} expects {}",
                obs.len(),
                spec.kind,
                spec.obs_dim()
            )));
        }
        let o: Vec<f64> = obs.iter().map(|&x| x as f64).collect();
        let (pos, vel, goal) = match spec.kind {
            EnvKind::PointReach => ([o[0], o[1]], [o[2], o[3]], [o[4], o[5]]),
            EnvKind::Reacher2Link => (
                [o[2].atan2(o[0]), o[3].atan2(o[1])],
                [o[4], o[5]],
                [o[6], o[7]],
            ),
        };
        let mut state = EnvState {
            kind: spec.kind,
            pos,
            vel,
            goal,
            t,
            succeeded: false,
        };
        state.succeeded = state.goal_distance(spec) < spec.success_radius;
        Ok(state)
    }

    /// Position of the point that must reach the goal.
    pub fn effector(&self, spec: &EnvSpec) -> [f64; 2] {
        match self.kind {
            EnvKind::PointReach => self.pos,
            EnvKind::Reacher2Link => spec.end_effector(self.pos),
        }
    }

    pub fn goal_distance(&self, spec: &EnvSpec) -> f64 {
        let e = self.effector(spec);
        ((e[0] - self.goal[0]).powi(2) + (e[1] - self.goal[1]).powi(2)).sqrt()
    }
}

/// Samples a start state and goal from the seed.
///
/// Point-reach: start position and goal uniform in `[-1, 1]^2`, zero
/// velocity. Reacher: joint angles uniform in `(-π, π]`, zero velocity,
/// goal at radius `U(0.3, 0.9)` and uniform angle (inside `[-1, 1]^2`).
pub fn reset(spec: &EnvSpec, seed: u64) -> EnvState {
    let mut r = rng::labelled(seed, "env-reset");
    let (pos, goal) = match spec.kind {
        EnvKind::PointReach => {
            let pos = [
                r.random_range(-START_BOX..START_BOX),
                r.random_range(-START_BOX..START_BOX),
            ];
            let goal = [
                r.random_range(-GOAL_BOX..GOAL_BOX),
                r.random_range(-GOAL_BOX..GOAL_BOX),
            ];
            (pos, goal)
        }
        EnvKind::Reacher2Link => {
            let q = [wrap_angle(r.random_range(-PI..PI)), wrap_angle(r.random_range(-PI..PI))];
            let radius = r.random_range(REACHER_GOAL_RADIUS.0..REACHER_GOAL_RADIUS.1);
            let angle = r.random_range(-PI..PI);
            (q, [radius * angle.cos(), radius * angle.sin()])
        }
    };
    let mut state = EnvState {
        kind: spec.kind,
        pos,
        vel: [0.0; 2],
        goal,
        t: 0,
        succeeded: false,
    };
    state.succeeded = state.goal_distance(spec) < spec.success_radius;
    state
}

/// Advances one step. Actions outside `[-1, 1]` are clamped.
///
/// Returns the next state and whether it is inside the success radius.
pub fn step(spec: &EnvSpec, state: &EnvState, action: &[f64]) -> Result<(EnvState, bool)> {
    if spec.kind != state.kind {
        return Err(SimError::KindMismatch {
            spec: spec.kind,
            state: state.kind,
        });
    }
    if action.len() != spec.action_dim() {
        return Err(SimError::ActionDim {
            expected: spec.action_dim(),
            found: action.len(),
        });
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(SimError::NonFiniteAction(action.to_vec()));
    }
    let a = [action[0].clamp(-1.0, 1.0), action[1].clamp(-1.0, 1.0)];
    let dt = spec.dt;
    let mut next = state.clone();
    match spec.kind {
        EnvKind::PointReach => {
            for i in 0..2 {
                next.vel[i] = (state.vel[i] + dt * a[i]).clamp(-1.0, 1.0);
                next.pos[i] = state.pos[i] + dt * next.vel[i];
            }
        }
        EnvKind::Reacher2Link => {
            for i in 0..2 {
                next.vel[i] = (state.vel[i] + dt * (a[i] - spec.damping * state.vel[i])).clamp(-1.0, 1.0);
                next.pos[i] = wrap_angle(state.pos[i] + dt * next.vel[i]);
            }
        }
    }
    next.t = state.t + 1;
    let success = next.goal_distance(spec) < spec.success_radius;
    next.succeeded = state.succeeded || success;
    Ok((next, success))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_seeded() {
        for spec in [EnvSpec::point_reach(), EnvSpec::reacher()] {
            assert_eq!(reset(&spec, 0), reset(&spec, 0));
            assert_ne!(reset(&spec, 0), reset(&spec, 1));
        }
    }

    #[test]
    fn goals_inside_box() {
        for spec in [EnvSpec::point_reach(), EnvSpec::reacher()] {
            for seed in 0..1000 {
                let s = reset(&spec, seed);
                assert!(s.goal.iter().all(|g| g.abs() <= GOAL_BOX), "{s:?}");
                if spec.kind == EnvKind::Reacher2Link {
                    assert!(s.pos.iter().all(|q| *q > -PI && *q <= PI));
                }
            }
        }
    }

    #[test]
    fn point_reach_update_rule() {
        let spec = EnvSpec::point_reach();
        let s = EnvState {
            kind: EnvKind::PointReach,
            pos: [0.0, 0.0],
            vel: [0.0, 0.0],
            goal: [0.9, 0.9],
            t: 0,
            succeeded: false,
        };
        let (n, success) = step(&spec, &s, &[1.0, 0.0]).unwrap();
        assert!((n.vel[0] - 0.1).abs() < 1e-15 && n.vel[1] == 0.0);
        assert!((n.pos[0] - 0.01).abs() < 1e-15 && n.pos[1] == 0.0);
        assert!(!success);
        assert_eq!(n.t, 1);

        let (z, _) = step(&spec, &s, &[0.0, 0.0]).unwrap();
        assert_eq!((z.pos, z.vel, z.goal), (s.pos, s.vel, s.goal));
        assert_eq!(z.t, 1);
    }

    #[test]
    fn success_inside_radius_latches() {
        let spec = EnvSpec::point_reach();
        let s = EnvState {
            kind: EnvKind::PointReach,
            pos: [0.0, 0.0],
            vel: [0.0, 0.0],
            goal: [0.05, 0.0],
            t: 0,
            succeeded: false,
        };
        let (n, success) = step(&spec, &s, &[0.0, 0.0]).unwrap();
        assert!(success && n.succeeded);
        let mut far = n.clone();
        far.goal = [0.9, 0.9];
        let (m, success) = step(&spec, &far, &[0.0, 0.0]).unwrap();
        assert!(!success && m.succeeded);
    }

    #[test]
    fn reacher_velocity_clamped_and_angles_wrapped() {
        let spec = EnvSpec::reacher();
        let mut s = reset(&spec, 3);
        for _ in 0..200 {
            s = step(&spec, &s, &[5.0, -5.0]).unwrap().0;
            assert!(s.vel.iter().all(|v| v.abs() <= 1.0));
            assert!(s.pos.iter().all(|q| *q > -PI && *q <= PI));
        }
        assert_eq!(s.vel, [1.0, -1.0]);
    }

    #[test]
    fn invalid_actions_rejected() {
        let spec = EnvSpec::point_reach();
        let s = reset(&spec, 0);
        assert!(matches!(step(&spec, &s, &[f64::NAN, 0.0]), Err(SimError::NonFiniteAction(_))));
        assert!(matches!(step(&spec, &s, &[0.0]), Err(SimError::ActionDim { .. })));
        assert!(matches!(
            step(&EnvSpec::reacher(), &s, &[0.0, 0.0]),
            Err(SimError::KindMismatch { .. })
        ));
    }

    #[test]
    fn observation_inverts() {
        for spec in [EnvSpec::point_reach(), EnvSpec::reacher()] {
            let s = step(&spec, &reset(&spec, 4), &[0.3, -0.7]).unwrap().0;
            let back = EnvState::from_observation(&spec, &s.observation(), s.t).unwrap();
            for i in 0..2 {
                assert!((back.pos[i] - s.pos[i]).abs() < 1e-6);
                assert!((back.vel[i] - s.vel[i]).abs() < 1e-6);
                assert!((back.goal[i] - s.goal[i]).abs() < 1e-6);
            }
            assert_eq!(back.observation(), s.observation());
        }
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn spec_hash_tracks_fields() {
        let a = EnvSpec::point_reach();
        let mut b = a.clone();
        assert_eq!(a.spec_hash(), b.spec_hash());
        b.horizon = 50;
        assert_ne!(a.spec_hash(), b.spec_hash());
        assert_ne!(a.spec_hash(), EnvSpec::reacher().spec_hash());
    }

    #[test]
    fn env_names_parse() {
        assert_eq!("reacher-2link".parse::<EnvKind>().unwrap(), EnvKind::Reacher2Link);
        assert!("cartpole".parse::<EnvKind>().is_err());
    }
}
