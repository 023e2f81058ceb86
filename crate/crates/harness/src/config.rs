use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clam_core::LamConfig;
use clam_policies::PolicyConfig;
use clam_worldsim::{BehaviorKind, EnvKind, EnvSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{HarnessError, Result};

/// Environment choice plus the few constants worth overriding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub kind: EnvKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success_radius: Option<f64>,
}

impl EnvConfig {
    pub fn new(kind: EnvKind) -> Self {
        EnvConfig {
            kind,
            horizon: None,
            dt: None,
            success_radius: None,
        }
    }

    pub fn spec(&self) -> Result<EnvSpec> {
        let mut spec = EnvSpec::new(self.kind);
        if let Some(h) = self.horizon {
            spec.horizon = h;
        }
        if let Some(dt) = self.dt {
            spec.dt = dt;
        }
        if let Some(r) = self.success_radius {
            spec.success_radius = r;
        }
        spec.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Latent action model + latent policy, configured by `lam`.
    Clam,
    BcAl,
    Vpt,
    /// Discrete latents, decoder fitted after pretraining.
    Lapo,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Clam, Method::BcAl, Method::Vpt, Method::Lapo];

    pub fn name(self) -> &'static str {
        match self {
            Method::Clam => "clam",
            Method::BcAl => "bc-al",
            Method::Vpt => "vpt",
            Method::Lapo => "lapo",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown method `{s}` (clam, bc-al, vpt, lapo)")))
    }
}

fn default_methods() -> Vec<Method> {
    vec![Method::Clam]
}

/// One end-to-end experiment. Round-trips through TOML; the canonical
/// serialization defines [`ExperimentConfig::hash`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_unlabeled: usize,
    pub n_labeled: usize,
    /// Behaviour tag for the labeled data, e.g. `random` or `noisy-expert:0.3`.
    pub labeled_policy: String,
    pub eval_episodes: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Run the degeneracy probes on the labeled data after pretraining.
    #[serde(default)]
    pub diagnostics: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub env: EnvConfig,
    #[serde(default)]
    pub lam: LamConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
}

impl Default for ExperimentConfig {
    /// Reacher, 200 expert trajectories, 50 random-policy labeled ones.
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            n_unlabeled: 200,
            n_labeled: 50,
            labeled_policy: "random".into(),
            eval_episodes: 100,
            methods: default_methods(),
            diagnostics: false,
            output_dir: None,
            env: EnvConfig::new(EnvKind::Reacher2Link),
            lam: LamConfig::default(),
            policy: PolicyConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML, with
    /// `output_dir` removed (where results go does not change them).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let digest = Sha256::digest(c.to_toml().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn labeled_behavior(&self) -> Result<BehaviorKind> {
        self.labeled_policy
            .parse()
            .map_err(|e: clam_worldsim::SimError| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.env.spec()?;
        self.labeled_behavior()?;
        if self.n_unlabeled == 0 || self.n_labeled == 0 {
            return Err(HarnessError::Config("dataset sizes must be positive".into()));
        }
        if self.eval_episodes == 0 {
            return Err(HarnessError::Config("eval_episodes must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(HarnessError::Config("at least one method is required".into()));
        }
        self.lam.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.policy.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }
}
