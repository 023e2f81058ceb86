use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn clam(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clam"))
        .args(args)
        .env("CLAM_OUTPUT_ROOT", root)
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const TINY: &str = r#"
seed = 0
n_unlabeled = 4
n_labeled = 3
labeled_policy = "random"
eval_episodes = 10
methods = ["clam"]

[env]
kind = "point-reach"

[lam]
steps = 10
batch_size = 16
labeled_batch_size = 16
decoder_hidden_dims = [16]
trunk = { kind = "mlp", hidden_dims = [32, 32] }

[policy]
hidden_dims = [32]
steps = 10
batch_size = 16
"#;

#[test]
fn gen_data_is_reproducible_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.clamdata");
    let b = dir.path().join("b.clamdata");
    for p in [&a, &b] {
        let args = ["gen-data", "--env", "point-reach", "--policy", "expert", "--n", "10", "--seed", "7", "--out"];
        let mut args = args.to_vec();
        args.push(p.to_str().unwrap());
        ok(&clam(&args, dir.path()));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(clam_datastore::load(&a).unwrap().len(), 10);

    let bad_env = clam(&["gen-data", "--env", "pendulum", "--policy", "expert", "--n", "1"], dir.path());
    assert_eq!(bad_env.status.code(), Some(2));
    let zero = clam(&["gen-data", "--env", "point-reach", "--policy", "expert", "--n", "0"], dir.path());
    assert_eq!(zero.status.code(), Some(2));
    let bad_policy = clam(&["gen-data", "--env", "point-reach", "--policy", "noisy-expert:x", "--n", "1"], dir.path());
    assert_eq!(bad_policy.status.code(), Some(2));

    // default output location lives under the output root
    ok(&clam(&["gen-data", "--env", "reacher-2link", "--policy", "random", "--n", "2"], dir.path()));
    assert!(dir.path().join("data/reacher-2link-random-2-0.clamdata").exists());
}

#[test]
fn staged_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("exp.toml");
    fs::write(&cfg, TINY).unwrap();
    let s = |p: &str| d.join(p).to_str().unwrap().to_string();
    ok(&clam(&["gen-data", "--env", "point-reach", "--policy", "expert", "--n", "4", "--seed", "1", "--out", &s("expert.clamdata")], d));
    ok(&clam(&["gen-data", "--env", "point-reach", "--policy", "random", "--n", "3", "--seed", "2", "--out", &s("labeled.clamdata")], d));

    let missing = clam(&["pretrain-lam", "--config", &s("exp.toml"), "--unlabeled", &s("expert.clamdata"), "--out", &s("lam")], d);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("--labeled is required"));

    ok(&clam(
        &["pretrain-lam", "--config", &s("exp.toml"), "--unlabeled", &s("expert.clamdata"), "--labeled", &s("labeled.clamdata"), "--out", &s("lam")],
        d,
    ));
    let metrics = fs::read_to_string(d.join("lam/lam_metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next().unwrap(), "step,l_recon,l_ad,l_vq,l_total");
    assert_eq!(metrics.lines().count(), 11);

    // β=0: decoder left at its initial values
    fs::write(d.join("beta0.toml"), TINY.replace("[lam]\n", "[lam]\nbeta = 0.0\n")).unwrap();
    ok(&clam(&["pretrain-lam", "--config", &s("beta0.toml"), "--unlabeled", &s("expert.clamdata"), "--out", &s("lam0")], d));
    let trained = clam_core::LamModel::load(&d.join("lam0/lam.ckpt")).unwrap();
    let fresh = clam_core::LamModel::new(
        trained.config().clone(),
        trained.obs_dim(),
        trained.action_dim(),
        trained.env_hash(),
        clam_numerics::rng::derive(0, "lam-init"),
    )
    .unwrap();
    for id in trained.decoder_param_ids() {
        assert_eq!(trained.store.value(id), fresh.store.value(id));
    }
    assert_ne!(
        trained.store.value(trained.idm_param_ids()[0]),
        fresh.store.value(fresh.idm_param_ids()[0])
    );

    ok(&clam(&["train-policy", "--lam", &s("lam/lam.ckpt"), "--expert", &s("expert.clamdata"), "--config", &s("exp.toml"), "--out", &s("pol")], d));
    assert!(d.join("pol/policy.ckpt").exists());
    let eval = |out: &str| {
        let o = clam(
            &["evaluate", "--policy", &s("pol/policy.ckpt"), "--lam", &s("lam/lam.ckpt"), "--env", "point-reach", "--episodes", "100", "--seed", "5", "--out", &s(out)],
            d,
        );
        ok(&o);
        String::from_utf8_lossy(&o.stdout).to_string()
    };
    let first = eval("e1.csv");
    assert_eq!(first, eval("e2.csv"));
    let rows = fs::read_to_string(d.join("e1.csv")).unwrap();
    assert_eq!(rows.lines().count(), 101);
    assert_eq!(rows, fs::read_to_string(d.join("e2.csv")).unwrap());

    // a policy for a 2-d latent against a 4-d model
    fs::write(d.join("z2.toml"), TINY.replace("[lam]\n", "[lam]\nlatent_dim = 2\n")).unwrap();
    ok(&clam(
        &["pretrain-lam", "--config", &s("z2.toml"), "--unlabeled", &s("expert.clamdata"), "--labeled", &s("labeled.clamdata"), "--out", &s("lam2")],
        d,
    ));
    ok(&clam(&["train-policy", "--lam", &s("lam2/lam.ckpt"), "--expert", &s("expert.clamdata"), "--out", &s("pol2")], d));
    let mismatch = clam(&["evaluate", "--policy", &s("pol2/policy.ckpt"), "--lam", &s("lam/lam.ckpt"), "--env", "point-reach"], d);
    assert_eq!(mismatch.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("latent"));

    let corrupt = d.join("corrupt.clamdata");
    fs::write(&corrupt, b"CLAMDATA\x01\x00\x00").unwrap();
    let o = clam(&["train-policy", "--lam", &s("lam/lam.ckpt"), "--expert", corrupt.to_str().unwrap()], d);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn run_compare_and_ablate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("exp.toml"), TINY).unwrap();
    let cfg = d.join("exp.toml");
    let cfg = cfg.to_str().unwrap();
    ok(&clam(&["run", "--config", cfg, "--out", d.join("r").to_str().unwrap()], d));
    assert!(d.join("r/eval.csv").exists());
    let o = clam(&["compare", "--config", cfg, "--out", d.join("c").to_str().unwrap()], d);
    ok(&o);
    let eval = fs::read_to_string(d.join("c/eval.csv")).unwrap();
    for m in ["clam", "bc-al", "vpt", "lapo"] {
        assert!(eval.lines().any(|l| l.starts_with(&format!("{m},"))), "{eval}");
    }
    let o = clam(&["ablate", "--study", "latent-dim", "--seeds", "1", "--config", cfg], d);
    ok(&o);
    let rows = fs::read_to_string(d.join("ablations/latent-dim_results.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 4);
    let bad = clam(&["ablate", "--study", "colour"], d);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("joint-vs-discrete"));
    let missing = clam(&["run", "--config", d.join("absent.toml").to_str().unwrap()], d);
    assert_eq!(missing.status.code(), Some(1));
}
