use clam_core::{relabel, train_lam, LamConfig, LatentMode, Trunk};
use clam_datastore::{generate_dataset, Dataset};
use clam_numerics::Tensor;
use clam_policies::{
    evaluate, read_eval_csv, train_bc_al, train_clam, train_lapo_style, train_latent_policy, train_vpt, write_eval_csv,
    BcPolicy, ClamAgent, Controller, EvalRow, LatentPolicy, PolicyConfig, PolicyError, PolicyInit, RandomController,
    ScriptedExpert, EVAL_HEADER,
};
use clam_worldsim::{BehaviorKind, EnvSpec};

fn lam_cfg(steps: usize) -> LamConfig {
    LamConfig {
        trunk: Trunk::Mlp {
            hidden_dims: vec![64, 64],
        },
        decoder_hidden_dims: vec![32],
        batch_size: 32,
        labeled_batch_size: 32,
        steps,
        decoder_fit_steps: 20,
        ..LamConfig::default()
    }
}

fn pol_cfg(steps: usize) -> PolicyConfig {
    PolicyConfig {
        hidden_dims: vec![64, 64],
        steps,
        batch_size: 64,
        ..PolicyConfig::default()
    }
}

fn data() -> (EnvSpec, Dataset, Dataset) {
    let spec = EnvSpec::point_reach();
    let expert = generate_dataset(&spec, BehaviorKind::Expert, 4, 21).unwrap();
    let labeled = generate_dataset(&spec, BehaviorKind::Random, 3, 22).unwrap();
    (spec, expert, labeled)
}

#[test]
fn latent_policy_memorises_one_trajectory() {
    let (_, expert, labeled) = data();
    let (lam, _) = train_lam(&lam_cfg(30), &expert, Some(&labeled), 0).unwrap();
    let one = relabel(&lam, &expert.take(1).unwrap()).unwrap();
    let cfg = PolicyConfig {
        steps: 1500,
        batch_size: 99,
        ..pol_cfg(0)
    };
    let (_, losses) = train_latent_policy(&lam, &one, &cfg, 0).unwrap();
    assert_eq!(losses.len(), 1500);
    assert!(*losses.last().unwrap() < 1e-3, "{}", losses.last().unwrap());
}

#[test]
fn latent_policy_beats_the_latent_variance_on_held_out_windows() {
    let spec = EnvSpec::point_reach();
    let expert = generate_dataset(&spec, BehaviorKind::Expert, 12, 5).unwrap();
    let labeled = generate_dataset(&spec, BehaviorKind::Random, 3, 6).unwrap();
    let (lam, _) = train_lam(&lam_cfg(300), &expert, Some(&labeled), 0).unwrap();
    let rel = relabel(&lam, &expert).unwrap();
    let train = Dataset::new(
        rel.role(),
        rel.env_hash(),
        rel.obs_dim(),
        rel.action_dim(),
        rel.latent_dim(),
        rel.trajectories()[..10].to_vec(),
    )
    .unwrap();
    let (policy, _) = train_latent_policy(&lam, &train, &pol_cfg(1000), 0).unwrap();
    let (mut obs, mut z) = (Vec::new(), Vec::new());
    for tr in &rel.trajectories()[10..] {
        for t in 0..tr.transitions() {
            obs.extend_from_slice(tr.obs(t));
            z.extend_from_slice(tr.latent(t).unwrap());
        }
    }
    let n = z.len() / 4;
    let pred = policy.predict(&Tensor::new([n, 6], obs).unwrap()).unwrap();
    let mse: f32 = pred.data().iter().zip(&z).map(|(p, t)| (p - t).powi(2)).sum::<f32>() / z.len() as f32;
    let mut var = 0.0;
    for j in 0..4 {
        let col: Vec<f32> = z.iter().skip(j).step_by(4).copied().collect();
        let m = col.iter().sum::<f32>() / n as f32;
        var += col.iter().map(|v| (v - m).powi(2)).sum::<f32>() / n as f32 / 4.0;
    }
    assert!(mse < var, "held-out mse {mse} vs variance {var}");
}

#[test]
fn idm_initialisation() {
    let (_, expert, labeled) = data();
    let cfg = LamConfig {
        trunk: Trunk::Mlp {
            hidden_dims: vec![64, 64],
        },
        ..lam_cfg(5)
    };
    let (mut lam, _) = train_lam(&cfg, &expert, Some(&labeled), 0).unwrap();
    let fresh = LatentPolicy::new(6, 4, &[64, 64], 9).unwrap();
    let mut copied = fresh.clone();
    assert!(copied.init_from_idm(&lam).unwrap());
    let w0 = copied.store.id("policy.0.weight").unwrap();
    let idm_w = lam.idm_input_weight().unwrap().clone();
    assert_eq!(copied.store.value(w0).data(), &idm_w.data()[6 * 64..12 * 64]);

    let idm0 = lam.store.id("idm.0.weight").unwrap();
    let zeros = Tensor::zeros(lam.store.value(idm0).shape().to_vec());
    lam.store.set_value(idm0, zeros).unwrap();
    let mut untouched = fresh.clone();
    assert!(!untouched.init_from_idm(&lam).unwrap());
    for id in fresh.store.ids() {
        assert_eq!(untouched.store.value(id), fresh.store.value(id));
    }
    let from_idm = PolicyConfig { init: PolicyInit::FromIdm, ..pol_cfg(3) };
    let rel = relabel(&lam, &expert).unwrap();
    let (a, _) = train_latent_policy(&lam, &rel, &from_idm, 4).unwrap();
    let (b, _) = train_latent_policy(&lam, &rel, &pol_cfg(3), 4).unwrap();
    for id in a.store.ids() {
        assert_eq!(a.store.value(id), b.store.value(id));
    }
}

#[test]
fn agent_actions_are_deterministic_and_bounded() {
    let (spec, expert, labeled) = data();
    let run = train_clam(&lam_cfg(40), &expert, Some(&labeled), &pol_cfg(40), 0).unwrap();
    let obs = Tensor::from_fn([7, 6], |i| ((i * 37) % 11) as f32 * 0.3 - 1.5);
    let a = run.agent.act(&obs).unwrap();
    assert_eq!(a, run.agent.act(&obs).unwrap());
    assert_eq!(a.shape(), &[7, 2]);
    assert!(a.data().iter().all(|v| v.abs() < 1.0));

    let mut zeroed = run.agent.clone();
    let ids: Vec<_> = zeroed.policy.store.ids().collect();
    for id in ids {
        let z = Tensor::zeros(zeroed.policy.store.value(id).shape().to_vec());
        zeroed.policy.store.set_value(id, z).unwrap();
    }
    for id in zeroed.lam.decoder_param_ids() {
        let z = Tensor::zeros(zeroed.lam.store.value(id).shape().to_vec());
        zeroed.lam.store.set_value(id, z).unwrap();
    }
    assert!(zeroed.act(&obs).unwrap().data().iter().all(|&v| v == 0.0));
    assert!(matches!(run.agent.act(&Tensor::zeros([2, 5])), Err(PolicyError::Dim { .. })));

    let mut agent = run.agent;
    let r1 = evaluate(&mut agent, &spec, 20, 3).unwrap();
    let r2 = evaluate(&mut agent, &spec, 20, 3).unwrap();
    assert_eq!(r1, r2);
}

#[test]
fn latent_dim_mismatch_is_an_error() {
    let (_, expert, labeled) = data();
    let (lam, _) = train_lam(&lam_cfg(5), &expert, Some(&labeled), 0).unwrap();
    let policy = LatentPolicy::new(6, 3, &[16], 0).unwrap();
    assert!(matches!(
        ClamAgent::new(lam.clone(), policy),
        Err(PolicyError::LatentDimMismatch { policy: 3, lam: 4 })
    ));
    let other = LamConfig { latent_dim: 2, beta: 0.0, ..lam_cfg(5) };
    let (lam2, _) = train_lam(&other, &expert, None, 0).unwrap();
    let rel = relabel(&lam2, &expert).unwrap();
    assert!(matches!(
        train_latent_policy(&lam, &rel, &pol_cfg(2), 0),
        Err(PolicyError::LatentDimMismatch { policy: 2, lam: 4 })
    ));
}

#[test]
fn reference_controllers() {
    for spec in [EnvSpec::point_reach(), EnvSpec::reacher()] {
        let mut expert = ScriptedExpert { spec: spec.clone() };
        let r = evaluate(&mut expert, &spec, 100, 0).unwrap();
        assert!(r.success_rate >= 0.95, "{:?} {}", spec.kind, r.success_rate);
        assert_eq!(r.steps_to_success.len(), 100);
        let mut random = RandomController::new(2, 0);
        let r = evaluate(&mut random, &spec, 100, 0).unwrap();
        assert!(r.success_rate <= 0.2, "{:?} {}", spec.kind, r.success_rate);
        assert!(r.mean_steps <= (spec.horizon - 1) as f64);
    }
    let spec = EnvSpec::point_reach();
    let a = evaluate(&mut RandomController::new(2, 4), &spec, 30, 8).unwrap();
    let b = evaluate(&mut RandomController::new(2, 4), &spec, 30, 8).unwrap();
    assert_eq!(a, b);
    assert!(evaluate(&mut RandomController::new(2, 4), &spec, 0, 8).is_err());
}

#[test]
fn baselines_share_data_and_schema() {
    let (spec, expert, labeled) = data();
    let dir = tempfile::tempdir().unwrap();
    let ep = dir.path().join("expert.clamdata");
    let lp = dir.path().join("labeled.clamdata");
    clam_datastore::save(&expert, &ep).unwrap();
    clam_datastore::save(&labeled, &lp).unwrap();
    let expert = clam_datastore::load(&ep).unwrap();
    let labeled = clam_datastore::load(&lp).unwrap();

    let cfg = pol_cfg(30);
    let (mut bc, bc_losses) = train_bc_al(&labeled, &cfg, 1).unwrap();
    let (bc2, _) = train_bc_al(&labeled, &cfg, 1).unwrap();
    assert_eq!(bc_losses.len(), 30);
    let obs = Tensor::from_fn([3, 6], |i| i as f32 * 0.1);
    assert_eq!(bc.act(&obs).unwrap(), bc2.act(&obs).unwrap());

    let (mut vpt, rep) = train_vpt(&labeled, &expert, 1, &cfg, 1).unwrap();
    let (vpt2, rep2) = train_vpt(&labeled, &expert, 1, &cfg, 1).unwrap();
    assert_eq!(vpt.act(&obs).unwrap(), vpt2.act(&obs).unwrap());
    assert_eq!(rep.idm_val_mse, rep2.idm_val_mse);
    assert!(rep.idm_val_mse.is_finite());
    for (p, e) in rep.pseudo_labeled.trajectories().iter().zip(expert.trajectories()) {
        assert_eq!(p.actions.as_ref().unwrap().len(), e.transitions() * 2);
    }

    let mut lapo = train_lapo_style(&lam_cfg(20), &expert, &labeled, &cfg, 1).unwrap();
    let lapo2 = train_lapo_style(&lam_cfg(20), &expert, &labeled, &cfg, 1).unwrap();
    assert!(lapo.agent.lam.is_vq() && !lapo.agent.lam.config().joint_training);
    assert_eq!(lapo.agent.act(&obs).unwrap(), lapo2.agent.act(&obs).unwrap());
    assert_eq!(lapo.lam_report.decoder_fit.len(), 20);
    let manual = LamConfig {
        latent_mode: LatentMode::vq(),
        joint_training: false,
        ..lam_cfg(20)
    };
    let same = train_clam(&manual, &expert, Some(&labeled), &cfg, 1).unwrap();
    assert_eq!(same.agent.act(&obs).unwrap(), lapo.agent.act(&obs).unwrap());

    let mut clam = train_clam(&lam_cfg(20), &expert, Some(&labeled), &cfg, 1).unwrap();
    let mut rows = Vec::new();
    let methods: [(&str, &mut dyn Controller); 4] = [
        ("clam", &mut clam.agent),
        ("bc-al", &mut bc),
        ("vpt", &mut vpt),
        ("lapo", &mut lapo.agent),
    ];
    for (name, c) in methods {
        let r = evaluate(c, &spec, 10, 77).unwrap();
        assert_eq!(r.episodes, 10);
        rows.push(EvalRow::new(name, 1, &r));
    }
    let path = dir.path().join("eval.csv");
    write_eval_csv(&path, &rows).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), EVAL_HEADER.join(","));
    assert_eq!(read_eval_csv(&path).unwrap(), rows);
}

#[test]
fn policy_checkpoints_round_trip() {
    let (_, _, labeled) = data();
    let dir = tempfile::tempdir().unwrap();
    let (bc, _) = train_bc_al(&labeled, &pol_cfg(5), 0).unwrap();
    let path = dir.path().join("bc.ckpt");
    bc.save(&path).unwrap();
    let back = BcPolicy::load(&path).unwrap();
    let obs = Tensor::from_fn([2, 6], |i| i as f32 * 0.2);
    assert_eq!(back.act(&obs).unwrap(), bc.act(&obs).unwrap());
    assert!(LatentPolicy::load(&path).is_err());

    let lp = LatentPolicy::new(6, 4, &[8, 8], 3).unwrap();
    let path = dir.path().join("latent.ckpt");
    lp.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let back = LatentPolicy::load(&path).unwrap();
    assert_eq!(back.predict(&obs).unwrap(), lp.predict(&obs).unwrap());
    back.save(&path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
    assert!(BcPolicy::load(&path).is_err());
}
