use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clam_core::LatentMode;
use serde::{Deserialize, Serialize};

use crate::{run_experiment, ExperimentConfig, ExperimentReport, HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Study {
    JointVsDiscrete,
    Beta,
    LatentDim,
    UnlabeledScale,
    LabeledScale,
    LabeledExpertise,
}

impl Study {
    pub const ALL: [Study; 6] = [
        Study::JointVsDiscrete,
        Study::Beta,
        Study::LatentDim,
        Study::UnlabeledScale,
        Study::LabeledScale,
        Study::LabeledExpertise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Study::JointVsDiscrete => "joint-vs-discrete",
            Study::Beta => "beta",
            Study::LatentDim => "latent-dim",
            Study::UnlabeledScale => "unlabeled-scale",
            Study::LabeledScale => "labeled-scale",
            Study::LabeledExpertise => "labeled-expertise",
        }
    }

    pub fn levels(self) -> Vec<&'static str> {
        match self {
            Study::JointVsDiscrete => vec![
                "continuous-joint",
                "continuous-no-joint",
                "discrete-joint",
                "discrete-no-joint",
            ],
            Study::Beta => vec!["0", "0.001", "0.01", "1", "5"],
            Study::LatentDim => vec!["1", "2", "4", "8"],
            Study::UnlabeledScale => vec!["25", "50", "100", "200"],
            Study::LabeledScale => vec!["10", "25", "50", "100"],
            Study::LabeledExpertise => vec!["random", "play:20", "noisy-expert:0.5", "expert"],
        }
    }

    /// `base` with this study's factor set to `level`; nothing else changes.
    pub fn apply(self, base: &ExperimentConfig, level: &str) -> Result<ExperimentConfig> {
        let bad = || HarnessError::Config(format!("invalid level `{level}` for study {}", self.name()));
        let mut cfg = base.clone();
        match self {
            Study::JointVsDiscrete => {
                let (mode, joint) = level.split_once('-').ok_or_else(bad)?;
                cfg.lam.latent_mode = match mode {
                    "continuous" => LatentMode::Continuous,
                    "discrete" => LatentMode::vq(),
                    _ => return Err(bad()),
                };
                cfg.lam.joint_training = match joint {
                    "joint" => true,
                    "no-joint" => false,
                    _ => return Err(bad()),
                };
            }
            Study::Beta => cfg.lam.beta = level.parse().map_err(|_| bad())?,
            Study::LatentDim => cfg.lam.latent_dim = level.parse().map_err(|_| bad())?,
            Study::UnlabeledScale => cfg.n_unlabeled = level.parse().map_err(|_| bad())?,
            Study::LabeledScale => cfg.n_labeled = level.parse().map_err(|_| bad())?,
            Study::LabeledExpertise => cfg.labeled_policy = level.to_string(),
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Study {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Study::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| HarnessError::UnknownStudy {
                name: s.to_string(),
                valid: Study::ALL.iter().map(|st| st.name()).collect(),
            })
    }
}

/// Runs experiments under `root/cells/<config hash>`, reusing results for
/// configs already run by this runner.
pub struct Runner {
    root: PathBuf,
    cache: HashMap<String, ExperimentReport>,
}

impl Runner {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Runner {
            root: root.into(),
            cache: HashMap::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run(&mut self, config: &ExperimentConfig) -> Result<ExperimentReport> {
        let hash = config.hash();
        if let Some(r) = self.cache.get(&hash) {
            return Ok(r.clone());
        }
        let report = run_experiment(config, &self.root.join("cells").join(&hash))?;
        self.cache.insert(hash, report.clone());
        Ok(report)
    }
}

pub const ABLATION_HEADER: [&str; 7] = ["study", "level", "method", "seed", "success_rate", "mean_steps", "config_hash"];
pub const SUMMARY_HEADER: [&str; 6] = ["study", "level", "method", "n", "mean", "sd"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub study: String,
    pub level: String,
    pub method: String,
    pub seed: u64,
    pub success_rate: f64,
    pub mean_steps: f64,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub study: String,
    pub level: String,
    pub method: String,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub sd: f64,
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize(rows: &[AblationRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String, String)> = Vec::new();
    for r in rows {
        let k = (r.study.clone(), r.level.clone(), r.method.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(study, level, method)| {
            let xs: Vec<f64> = rows
                .iter()
                .filter(|r| r.study == study && r.level == level && r.method == method)
                .map(|r| r.success_rate)
                .collect();
            let (mean, sd) = mean_sd(&xs);
            SummaryRow {
                study,
                level,
                method,
                n: xs.len(),
                mean,
                sd,
            }
        })
        .collect()
}

pub struct AblationResult {
    pub rows: Vec<AblationRow>,
    pub summary: Vec<SummaryRow>,
    pub results_csv: PathBuf,
    pub summary_csv: PathBuf,
}

/// The full level × seed grid of `study`; seed `s` uses master seed
/// `base.seed + s`. Writes `<study>_results.csv` and `<study>_summary.csv`
/// into the runner root.
pub fn run_ablation(runner: &mut Runner, study: Study, base: &ExperimentConfig, seeds: u64) -> Result<AblationResult> {
    if seeds == 0 {
        return Err(HarnessError::Config("an ablation needs at least one seed".into()));
    }
    let mut rows = Vec::new();
    for level in study.levels() {
        let cell = study.apply(base, level)?;
        for s in 0..seeds {
            let mut cfg = cell.clone();
            cfg.seed = base.seed + s;
            let report = runner.run(&cfg)?;
            for e in &report.eval {
                rows.push(AblationRow {
                    study: study.name().into(),
                    level: level.into(),
                    method: e.method.clone(),
                    seed: cfg.seed,
                    success_rate: e.success_rate,
                    mean_steps: e.mean_steps,
                    config_hash: report.config_hash.clone(),
                });
            }
        }
    }
    let summary = summarize(&rows);
    std::fs::create_dir_all(runner.root())?;
    let results_csv = runner.root().join(format!("{}_results.csv", study.name()));
    let summary_csv = runner.root().join(format!("{}_summary.csv", study.name()));
    write_rows(&results_csv, &rows)?;
    write_rows(&summary_csv, &summary)?;
    Ok(AblationResult {
        rows,
        summary,
        results_csv,
        summary_csv,
    })
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
