use std::fs;
use std::path::Path;

use clam_harness::{run_ablation, run_experiment, summarize, ExperimentConfig, Method, Runner, Study};
use clam_worldsim::EnvKind;

fn tiny() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.env.kind = EnvKind::PointReach;
    cfg.env.horizon = Some(60);
    cfg.n_unlabeled = 4;
    cfg.n_labeled = 3;
    cfg.eval_episodes = 10;
    cfg.lam.trunk = clam_core::Trunk::Mlp { hidden_dims: vec![32, 32] };
    cfg.lam.decoder_hidden_dims = vec![16];
    cfg.lam.batch_size = 32;
    cfg.lam.labeled_batch_size = 32;
    cfg.lam.steps = 15;
    cfg.lam.decoder_fit_steps = 10;
    cfg.policy.hidden_dims = vec![32, 32];
    cfg.policy.steps = 15;
    cfg.policy.batch_size = 32;
    cfg
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "timing.json" {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn reruns_are_byte_identical() {
    let mut cfg = tiny();
    cfg.methods = Method::ALL.to_vec();
    cfg.diagnostics = true;
    let dir = tempfile::tempdir().unwrap();
    let a = run_experiment(&cfg, &dir.path().join("a")).unwrap();
    let b = run_experiment(&cfg, &dir.path().join("b")).unwrap();
    assert_eq!(a.eval, b.eval);
    assert_eq!(a.config_hash, b.config_hash);
    let fa = csv_files(&a.out_dir);
    assert_eq!(fa, csv_files(&b.out_dir));

    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    for f in [
        "config.toml",
        "eval.csv",
        "episodes.csv",
        "data/unlabeled-expert.clamdata",
        "data/labeled.clamdata",
        "clam/lam.ckpt",
        "clam/lam_metrics.csv",
        "clam/policy_metrics.csv",
        "clam/policy.ckpt",
        "clam/relabeled.clamdata",
        "clam/diagnostics.csv",
        "bc-al/policy_metrics.csv",
        "vpt/idm_metrics.csv",
        "vpt/idm_validation.csv",
        "vpt/policy_metrics.csv",
        "lapo/lam_metrics.csv",
        "lapo/decoder_fit.csv",
    ] {
        assert!(names.contains(&f), "missing {f} in {names:?}");
    }
    assert!(a.out_dir.join("timing.json").exists());
    let eval = fs::read_to_string(a.out_dir.join("eval.csv")).unwrap();
    assert_eq!(eval.lines().next().unwrap(), "method,seed,episodes,success_rate,mean_steps");
    assert_eq!(eval.lines().count(), 5);
    let episodes = fs::read_to_string(a.out_dir.join("episodes.csv")).unwrap();
    assert_eq!(episodes.lines().count(), 1 + 4 * 10);
    let lam_rows = fs::read_to_string(a.out_dir.join("clam/lam_metrics.csv")).unwrap();
    assert_eq!(lam_rows.lines().count(), 16);
    assert!(a.diagnostics.is_some());
    let saved = ExperimentConfig::load(&a.out_dir.join("config.toml")).unwrap();
    assert_eq!(saved, cfg);
}

#[test]
fn seed_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_experiment(&tiny(), &dir.path().join("a")).unwrap();
    let mut other = tiny();
    other.seed = 1;
    let b = run_experiment(&other, &dir.path().join("b")).unwrap();
    assert_ne!(
        fs::read(a.out_dir.join("clam/lam_metrics.csv")).unwrap(),
        fs::read(b.out_dir.join("clam/lam_metrics.csv")).unwrap()
    );
}

#[test]
fn stage_errors_are_tagged() {
    let mut cfg = tiny();
    cfg.env.success_radius = Some(1e-9);
    let dir = tempfile::tempdir().unwrap();
    let err = run_experiment(&cfg, dir.path()).unwrap_err().to_string();
    assert!(err.starts_with("gen-data:"), "{err}");
}

#[test]
fn ablation_grid_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut runner = Runner::new(dir.path());
    let res = run_ablation(&mut runner, Study::Beta, &tiny(), 2).unwrap();
    assert_eq!(res.rows.len(), 5 * 2);
    assert_eq!(res.summary.len(), 5);
    assert!(res.summary.iter().all(|s| s.n == 2 && s.sd >= 0.0));
    let text = fs::read_to_string(&res.results_csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "study,level,method,seed,success_rate,mean_steps,config_hash");
    assert_eq!(text.lines().count(), 11);
    let summary = fs::read_to_string(&res.summary_csv).unwrap();
    assert_eq!(summary.lines().next().unwrap(), "study,level,method,n,mean,sd");
    assert_eq!(summarize(&res.rows), res.summary);
    // the β=1 cell equals the base config, so a later study reuses it
    let cells = fs::read_dir(dir.path().join("cells")).unwrap().count();
    run_ablation(&mut runner, Study::Beta, &tiny(), 2).unwrap();
    assert_eq!(fs::read_dir(dir.path().join("cells")).unwrap().count(), cells);
}
