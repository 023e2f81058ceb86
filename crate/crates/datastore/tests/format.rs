use clam_datastore::{
    decode_dataset, encode_dataset, generate_dataset, load, save, DataError, Dataset, Role, Trajectory,
    DATA_VERSION,
};
use clam_worldsim::{BehaviorKind, EnvSpec};
use proptest::prelude::*;

fn documented_example() -> Dataset {
    let tr = Trajectory {
        obs_dim: 2,
        observations: vec![0.0, 1.0, 0.5, -1.0],
        actions: Some(vec![0.25]),
        latent_actions: None,
        success: true,
        seed: 7,
        policy_kind: "random".into(),
    };
    Dataset::new(Role::Labeled, 0x0123_4567_89ab_cdef, 2, 1, 0, vec![tr]).unwrap()
}

#[test]
fn matches_the_hex_walkthrough() {
    let doc = include_str!("../FORMAT.md");
    let block = doc.split("```text").nth(1).unwrap().split("```").next().unwrap();
    let hex_str: String = block
        .lines()
        .filter_map(|l| l.split_whitespace().next())
        .collect();
    let expected = hex::decode(hex_str).unwrap();
    assert_eq!(encode_dataset(&documented_example()), expected);
    assert_eq!(decode_dataset(&expected).unwrap(), documented_example());
}

#[test]
fn file_round_trip_is_byte_exact() {
    let ds = generate_dataset(&EnvSpec::reacher(), BehaviorKind::Random, 3, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.clamdata");
    save(&ds, &path).unwrap();
    let back = load(&path).unwrap();
    assert_eq!(back, ds);
    assert_eq!(std::fs::read(&path).unwrap(), encode_dataset(&back));
}

#[test]
fn corrupt_files_give_typed_errors() {
    let bytes = encode_dataset(&documented_example());
    for cut in [0, 4, 12, 30, bytes.len() - 1] {
        assert!(matches!(decode_dataset(&bytes[..cut]), Err(DataError::Truncated(_))), "cut {cut}");
    }
    let mut bumped = bytes.clone();
    bumped[8..12].copy_from_slice(&(DATA_VERSION + 1).to_le_bytes());
    assert!(matches!(
        decode_dataset(&bumped),
        Err(DataError::VersionMismatch { found, expected }) if found == DATA_VERSION + 1 && expected == DATA_VERSION
    ));
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(decode_dataset(&magic), Err(DataError::BadMagic(_))));
    let mut trailing = bytes.clone();
    trailing.push(0);
    assert!(matches!(decode_dataset(&trailing), Err(DataError::Malformed(_))));
    let mut flags = bytes.clone();
    flags[41] = 0x80;
    assert!(matches!(decode_dataset(&flags), Err(DataError::Malformed(_))));
    // labeled role with the actions flag cleared breaks the role invariant
    let mut unlabeled = bytes.clone();
    unlabeled[41] = 4;
    unlabeled.truncate(bytes.len() - 4);
    assert!(matches!(decode_dataset(&unlabeled), Err(DataError::Invariant(_))));
}

fn arb_dataset() -> impl Strategy<Value = Dataset> {
    (1usize..4, 0usize..3, 0usize..3, 0u8..3).prop_flat_map(|(obs_dim, action_dim, latent_dim, role)| {
        let role = [Role::UnlabeledExpert, Role::Labeled, Role::RelabeledExpert][role as usize];
        let latent_dim = if role == Role::RelabeledExpert { latent_dim + 1 } else { latent_dim };
        let action_dim = action_dim + 1;
        let traj = (2usize..6, any::<bool>(), any::<bool>(), any::<bool>(), any::<u64>(), "[a-z:0-9.]{0,12}")
            .prop_flat_map(move |(t, has_a, has_z, success, seed, tag)| {
                let has_a = has_a || role == Role::Labeled;
                let has_z = (has_z && latent_dim > 0) || role == Role::RelabeledExpert;
                (
                    prop::collection::vec(any::<f32>(), t * obs_dim),
                    prop::collection::vec(any::<f32>(), (t - 1) * action_dim),
                    prop::collection::vec(any::<f32>(), (t - 1) * latent_dim),
                )
                    .prop_map(move |(o, a, z)| Trajectory {
                        obs_dim,
                        observations: o,
                        actions: has_a.then_some(a),
                        latent_actions: has_z.then_some(z),
                        success,
                        seed,
                        policy_kind: tag.clone(),
                    })
            });
        (prop::collection::vec(traj, 1..4), any::<u64>()).prop_map(move |(trs, hash)| {
            Dataset::new(role, hash, obs_dim, action_dim, latent_dim, trs).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn encode_decode_is_identity(ds in arb_dataset()) {
        let bytes = encode_dataset(&ds);
        let back = decode_dataset(&bytes).unwrap();
        prop_assert_eq!(encode_dataset(&back), bytes);
        for (a, b) in ds.trajectories().iter().zip(back.trajectories()) {
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&a.observations), bits(&b.observations));
            prop_assert_eq!(a.actions.as_deref().map(bits), b.actions.as_deref().map(bits));
            prop_assert_eq!(a.latent_actions.as_deref().map(bits), b.latent_actions.as_deref().map(bits));
            prop_assert_eq!(&a.policy_kind, &b.policy_kind);
        }
    }

    #[test]
    fn truncation_never_panics(ds in arb_dataset(), frac in 0.0f64..1.0) {
        let bytes = encode_dataset(&ds);
        let cut = ((bytes.len() as f64) * frac) as usize;
        prop_assert!(matches!(decode_dataset(&bytes[..cut]), Err(DataError::Truncated(_))));
    }
}
