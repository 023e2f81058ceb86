use clam_core::{nearest_code, ridge_r2, vq_quantize, LamConfig, LamModel, LatentMode};
use clam_numerics::{Tape, Tensor};
use proptest::prelude::*;

fn dist(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

proptest! {
    #[test]
    fn nearest_code_is_a_minimiser(
        (dim, cb, z) in (1usize..5, 2usize..10).prop_flat_map(|(d, k)| (
            Just(d),
            prop::collection::vec(-2.0f32..2.0, k * d),
            prop::collection::vec(-2.0f32..2.0, d),
        ))
    ) {
        let k = nearest_code(&cb, dim, &z).unwrap();
        let best = dist(&cb[k * dim..(k + 1) * dim], &z);
        for (j, row) in cb.chunks(dim).enumerate() {
            let d = dist(row, &z);
            prop_assert!(best <= d);
            if d == best {
                prop_assert!(k <= j);
            }
        }
    }

    #[test]
    fn quantized_forward_is_the_code_and_gradient_is_identity(
        zs in prop::collection::vec(-1.0f32..1.0, 6),
        cb in prop::collection::vec(-1.0f32..1.0, 8),
        w in prop::collection::vec(-1.0f32..1.0, 6),
    ) {
        let mut tape = Tape::new();
        let z = tape.input(Tensor::new([3, 2], zs.clone()).unwrap());
        let c = tape.input(Tensor::new([4, 2], cb.clone()).unwrap());
        let out = vq_quantize(&mut tape, c, z, 0.25).unwrap();
        let q = tape.value(out.quantized).clone();
        for (i, row) in q.data().chunks(2).enumerate() {
            let k = out.indices[i];
            prop_assert_eq!(row, &cb[k * 2..k * 2 + 2]);
        }
        let wv = tape.constant(Tensor::new([3, 2], w.clone()).unwrap());
        let p = tape.mul(out.quantized, wv).unwrap();
        let s = tape.sum(p);
        let g = tape.backward(s).unwrap();
        let gz = g.wrt(z);
        prop_assert_eq!(gz.data(), &w[..]);
    }

    #[test]
    fn snapping_is_idempotent(zs in prop::collection::vec(-0.1f32..0.1, 4 * 5), seed in any::<u64>()) {
        let cfg = LamConfig { latent_mode: LatentMode::vq(), ..LamConfig::default() };
        let m = LamModel::new(cfg, 6, 2, 0, seed).unwrap();
        let z = Tensor::new([5, 4], zs).unwrap();
        let once = m.snap(&z).unwrap();
        prop_assert_eq!(m.snap(&once).unwrap(), once);
    }

    #[test]
    fn ridge_r2_is_at_most_one(
        x in prop::collection::vec(-1.0f64..1.0, 120 * 2),
        y in prop::collection::vec(-1.0f64..1.0, 120),
    ) {
        let r = ridge_r2(&x, 2, &y, 1);
        prop_assert!(r <= 1.0 + 1e-12);
        prop_assert!(r.is_finite());
    }
}
