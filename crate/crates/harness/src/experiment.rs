use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clam_core::{degeneracy_report, write_decoder_fit_csv, write_metrics_csv, DegeneracyReport};
use clam_datastore::{generate_dataset, Dataset};
use clam_numerics::rng;
use clam_policies::{
    evaluate, train_bc_al, train_clam, train_lapo_style, train_vpt, write_eval_csv, ClamRun, Controller, EvalReport,
    EvalRow,
};
use clam_worldsim::{BehaviorKind, EnvSpec};

use crate::error::stage;
use crate::{ExperimentConfig, Method, Result};

pub const EPISODES_HEADER: [&str; 4] = ["method", "episode", "success", "steps"];

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub out_dir: PathBuf,
    /// One row per method, in config order.
    pub eval: Vec<EvalRow>,
    /// Degeneracy probes for the first latent-model method, when enabled.
    pub diagnostics: Option<DegeneracyReport>,
    pub wall_clock_secs: f64,
}

impl ExperimentReport {
    pub fn success_rate(&self, method: Method) -> Option<f64> {
        self.eval.iter().find(|r| r.method == method.name()).map(|r| r.success_rate)
    }
}

/// Datasets used by every method of one experiment.
pub struct SharedData {
    pub spec: EnvSpec,
    /// Expert data with its actions stripped.
    pub unlabeled: Dataset,
    pub labeled: Dataset,
}

pub fn generate_shared(config: &ExperimentConfig) -> Result<SharedData> {
    let spec = config.env.spec()?;
    let expert = generate_dataset(
        &spec,
        BehaviorKind::Expert,
        config.n_unlabeled,
        rng::derive(config.seed, "unlabeled-data"),
    )
    .map_err(stage("gen-data"))?;
    let unlabeled = expert.without_actions().map_err(stage("gen-data"))?;
    let labeled = generate_dataset(
        &spec,
        config.labeled_behavior()?,
        config.n_labeled,
        rng::derive(config.seed, "labeled-data"),
    )
    .map_err(stage("gen-data"))?;
    Ok(SharedData {
        spec,
        unlabeled,
        labeled,
    })
}

pub fn write_loss_csv(path: &Path, losses: &[f32]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "loss"])?;
    for (i, l) in losses.iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_diagnostics_csv(path: &Path, d: &DegeneracyReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["metric", "value"])?;
    let rows = [
        ("samples", d.samples.to_string()),
        ("latent_variance", d.latent_variance.to_string()),
        ("probe_r2_action", d.probe_r2_action.to_string()),
        ("probe_r2_copy", d.probe_r2_copy.to_string()),
        ("probe_r2_copy_linear", d.probe_r2_copy_linear.to_string()),
        ("shuffled_z_recon_gap", d.shuffled_z_recon_gap.to_string()),
        ("copy_warning", d.copy_warning.to_string()),
    ];
    for (k, v) in rows {
        w.write_record([k, v.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_clam_stage(dir: &Path, run: &ClamRun) -> Result<()> {
    fs::create_dir_all(dir)?;
    run.agent.lam.save(&dir.join("lam.ckpt")).map_err(stage("pretrain-lam"))?;
    write_metrics_csv(&dir.join("lam_metrics.csv"), &run.lam_report.metrics).map_err(stage("pretrain-lam"))?;
    if !run.lam_report.decoder_fit.is_empty() {
        write_decoder_fit_csv(&dir.join("decoder_fit.csv"), &run.lam_report.decoder_fit)
            .map_err(stage("pretrain-lam"))?;
    }
    clam_datastore::save(&run.relabeled, dir.join("relabeled.clamdata")).map_err(stage("relabel"))?;
    run.agent.policy.save(&dir.join("policy.ckpt")).map_err(stage("train-policy"))?;
    write_loss_csv(&dir.join("policy_metrics.csv"), &run.policy_losses)
}

/// Trains `method` on the shared data, writes its stage artifacts under
/// `dir` and returns a controller ready for evaluation.
fn train_method(
    config: &ExperimentConfig,
    method: Method,
    data: &SharedData,
    dir: &Path,
    diagnostics: &mut Option<DegeneracyReport>,
) -> Result<Box<dyn Controller>> {
    let seed = rng::derive(config.seed, method.name());
    fs::create_dir_all(dir)?;
    let latent_run = match method {
        Method::Clam => Some(
            train_clam(&config.lam, &data.unlabeled, Some(&data.labeled), &config.policy, seed)
                .map_err(stage("clam"))?,
        ),
        Method::Lapo => Some(
            train_lapo_style(&config.lam, &data.unlabeled, &data.labeled, &config.policy, seed)
                .map_err(stage("lapo"))?,
        ),
        Method::BcAl => {
            let (policy, losses) = train_bc_al(&data.labeled, &config.policy, seed).map_err(stage("bc-al"))?;
            policy.save(&dir.join("policy.ckpt")).map_err(stage("bc-al"))?;
            write_loss_csv(&dir.join("policy_metrics.csv"), &losses)?;
            return Ok(Box::new(policy));
        }
        Method::Vpt => {
            let (policy, rep) = train_vpt(&data.labeled, &data.unlabeled, config.lam.context, &config.policy, seed)
                .map_err(stage("vpt"))?;
            policy.save(&dir.join("policy.ckpt")).map_err(stage("vpt"))?;
            write_loss_csv(&dir.join("idm_metrics.csv"), &rep.idm_losses)?;
            write_loss_csv(&dir.join("policy_metrics.csv"), &rep.bc_losses)?;
            let mut w = csv::Writer::from_path(dir.join("idm_validation.csv"))?;
            w.write_record(["idm_val_mse"])?;
            w.write_record([rep.idm_val_mse.to_string()])?;
            w.flush()?;
            return Ok(Box::new(policy));
        }
    };
    let run = latent_run.expect("latent methods handled above");
    write_clam_stage(dir, &run)?;
    if config.diagnostics && diagnostics.is_none() {
        let d = degeneracy_report(&run.agent.lam, &data.labeled, rng::derive(config.seed, "diagnostics"))
            .map_err(stage("diagnostics"))?;
        write_diagnostics_csv(&dir.join("diagnostics.csv"), &d)?;
        *diagnostics = Some(d);
    }
    Ok(Box::new(run.agent))
}

fn write_episodes_csv(path: &Path, per_method: &[(Method, EvalReport)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(EPISODES_HEADER)?;
    for (m, r) in per_method {
        for (i, s) in r.steps_to_success.iter().enumerate() {
            let steps = s.map(|s| s.to_string()).unwrap_or_default();
            w.write_record([m.name(), &i.to_string(), &s.is_some().to_string(), &steps])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// gen-data → per-method training → evaluation on shared seeds, all
/// artifacts under `out_dir`. Every file except `timing.json` is a pure
/// function of the config.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport> {
    config.validate()?;
    let start = Instant::now();
    fs::create_dir_all(out_dir.join("data"))?;
    fs::write(out_dir.join("config.toml"), config.to_toml())?;
    let generated = generate_shared(config)?;
    let unlabeled_path = out_dir.join("data/unlabeled-expert.clamdata");
    let labeled_path = out_dir.join("data/labeled.clamdata");
    clam_datastore::save(&generated.unlabeled, &unlabeled_path).map_err(stage("gen-data"))?;
    clam_datastore::save(&generated.labeled, &labeled_path).map_err(stage("gen-data"))?;
    // every method reads the same files back
    let data = SharedData {
        spec: generated.spec,
        unlabeled: clam_datastore::load(&unlabeled_path).map_err(stage("load-data"))?,
        labeled: clam_datastore::load(&labeled_path).map_err(stage("load-data"))?,
    };

    let eval_seed = rng::derive(config.seed, "evaluation");
    let mut diagnostics = None;
    let mut per_method = Vec::new();
    for &method in &config.methods {
        let mut controller = train_method(config, method, &data, &out_dir.join(method.name()), &mut diagnostics)?;
        let report =
            evaluate(controller.as_mut(), &data.spec, config.eval_episodes, eval_seed).map_err(stage("evaluate"))?;
        per_method.push((method, report));
    }
    let eval: Vec<EvalRow> = per_method
        .iter()
        .map(|(m, r)| EvalRow::new(m.name(), config.seed, r))
        .collect();
    write_eval_csv(&out_dir.join("eval.csv"), &eval).map_err(stage("evaluate"))?;
    write_episodes_csv(&out_dir.join("episodes.csv"), &per_method)?;

    let wall_clock_secs = start.elapsed().as_secs_f64();
    let timing = serde_json::json!({ "config_hash": config.hash(), "wall_clock_secs": wall_clock_secs });
    fs::write(out_dir.join("timing.json"), timing.to_string())?;
    Ok(ExperimentReport {
        config_hash: config.hash(),
        out_dir: out_dir.to_path_buf(),
        eval,
        diagnostics,
        wall_clock_secs,
    })
}
