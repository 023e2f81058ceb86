use std::collections::HashSet;

use clam_datastore::{
    encode_dataset, generate_dataset, lam_windows, DataError, Dataset, LamBatch, LamBatcher, Role, Trajectory,
};
use clam_numerics::rng;
use clam_worldsim::{BehaviorKind, EnvSpec};

#[test]
fn generation_is_reproducible() {
    let spec = EnvSpec::point_reach();
    let a = generate_dataset(&spec, BehaviorKind::Expert, 10, 7).unwrap();
    let b = generate_dataset(&spec, BehaviorKind::Expert, 10, 7).unwrap();
    assert_eq!(encode_dataset(&a), encode_dataset(&b));
    assert_eq!(a.role(), Role::UnlabeledExpert);
    assert!(a.trajectories().iter().all(|t| t.success));
    let c = generate_dataset(&spec, BehaviorKind::Expert, 10, 8).unwrap();
    assert_ne!(encode_dataset(&a), encode_dataset(&c));
}

#[test]
fn smaller_datasets_are_prefixes() {
    let spec = EnvSpec::reacher();
    let big = generate_dataset(&spec, BehaviorKind::Expert, 20, 3).unwrap();
    let small = generate_dataset(&spec, BehaviorKind::Expert, 5, 3).unwrap();
    assert_eq!(big.take(5).unwrap(), small);
}

#[test]
fn labeled_random_dataset_shape() {
    let spec = EnvSpec::point_reach();
    let ds = generate_dataset(&spec, BehaviorKind::Random, 50, 0).unwrap();
    assert_eq!(ds.role(), Role::Labeled);
    let rows: usize = ds.trajectories().iter().map(|t| t.actions.as_ref().unwrap().len() / 2).sum();
    assert_eq!(rows, 50 * (spec.horizon - 1));
}

#[test]
fn unattainable_expert_is_an_error() {
    let mut spec = EnvSpec::point_reach();
    spec.success_radius = 1e-9;
    match generate_dataset(&spec, BehaviorKind::Expert, 2, 0) {
        Err(DataError::ExpertUnattainable { attempts, .. }) => assert_eq!(attempts, 20),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        generate_dataset(&spec, BehaviorKind::Random, 0, 0),
        Err(DataError::InvalidArgument(_))
    ));
}

#[test]
fn role_invariants_are_enforced() {
    let spec = EnvSpec::point_reach();
    let expert = generate_dataset(&spec, BehaviorKind::Expert, 2, 0).unwrap();
    let stripped = expert.without_actions().unwrap();
    assert!(matches!(stripped.clone().with_role(Role::Labeled), Err(DataError::Invariant(_))));
    assert!(matches!(stripped.clone().with_role(Role::RelabeledExpert), Err(DataError::Invariant(_))));
    let latents = stripped.trajectories().iter().map(|t| vec![0.0; t.transitions() * 3]).collect();
    let relabeled = stripped.with_latents(3, latents).unwrap();
    assert_eq!(relabeled.role(), Role::RelabeledExpert);
    let short = Trajectory {
        obs_dim: 6,
        observations: vec![0.0; 6],
        actions: None,
        latent_actions: None,
        success: false,
        seed: 0,
        policy_kind: "x".into(),
    };
    assert!(matches!(
        Dataset::new(Role::UnlabeledExpert, 0, 6, 2, 0, vec![short]),
        Err(DataError::Invariant(_))
    ));
    assert!(matches!(Dataset::new(Role::Labeled, 0, 6, 2, 0, vec![]), Err(DataError::Empty)));
}

#[test]
fn window_counts_and_padding() {
    let spec = EnvSpec::point_reach();
    let ds = generate_dataset(&spec, BehaviorKind::Random, 1, 0).unwrap();
    let w = lam_windows(&ds, 1);
    assert_eq!(w.len(), 99);
    assert_eq!(w.iter().filter(|w| w.padded).count(), 1);
    assert!(w[0].padded && w[0].t == 0);

    let tr = &ds.trajectories()[0];
    let b = LamBatch::gather(&ds, 1, &w[..2]);
    assert_eq!(b.context.shape(), &[2, 3, 6]);
    let row = |i: usize, k: usize| &b.context.data()[(i * 3 + k) * 6..(i * 3 + k + 1) * 6];
    assert_eq!(row(0, 0), tr.obs(0));
    assert_eq!(row(0, 1), tr.obs(0));
    assert_eq!(row(0, 2), tr.obs(1));
    assert_eq!(row(1, 0), tr.obs(0));
    assert_eq!(row(1, 2), tr.obs(2));
    assert_eq!(b.actions.as_ref().unwrap().row(1), tr.action(1).unwrap());

    let pairs = LamBatch::gather(&ds, 0, &lam_windows(&ds, 0)[5..6]);
    assert_eq!(pairs.context.shape(), &[1, 2, 6]);
    assert_eq!(&pairs.context.data()[..6], tr.obs(5));
    assert_eq!(&pairs.context.data()[6..], tr.obs(6));
}

#[test]
fn batcher_is_seeded_and_covers_every_window() {
    let mut spec = EnvSpec::point_reach();
    spec.horizon = 12;
    let ds = generate_dataset(&spec, BehaviorKind::Random, 2, 0).unwrap();
    let refs = |seed| {
        let mut b = LamBatcher::new(&ds, 1, 8, true, rng::stream(seed)).unwrap();
        (0..40).flat_map(|_| b.next_refs()).collect::<Vec<_>>()
    };
    assert_eq!(refs(1), refs(1));
    assert_ne!(refs(1), refs(2));
    let seen: HashSet<_> = refs(1).into_iter().collect();
    assert_eq!(seen.len(), 22);

    let mut b = LamBatcher::new(&ds, 1, 8, false, rng::stream(0)).unwrap();
    assert_eq!(b.num_windows(), 20);
    assert!((0..50).all(|_| b.next_refs().iter().all(|w| !w.padded)));
}

#[test]
fn empty_window_set_is_an_error() {
    let mut spec = EnvSpec::point_reach();
    spec.horizon = 10;
    let ds = generate_dataset(&spec, BehaviorKind::Random, 1, 0).unwrap();
    assert!(matches!(LamBatcher::new(&ds, 20, 4, false, rng::stream(0)), Err(DataError::Empty)));
}
