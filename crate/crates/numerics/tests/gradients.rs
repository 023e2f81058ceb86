use clam_numerics::op_cases::registered_cases;
use clam_numerics::{grad_check, Tape, Tensor};
use proptest::prelude::*;

#[test]
fn every_primitive_matches_finite_differences() {
    let mut worst = 0.0f64;
    for case in registered_cases() {
        for seed in 0..5u64 {
            let report = grad_check(&case, &case.shapes, seed, 1e-4).unwrap();
            assert!(report.passed, "{} seed {seed}: {report:?}", case.name());
            worst = worst.max(report.max_rel_error);
        }
    }
    assert!(worst < 1e-4);
}

#[test]
fn backward_is_deterministic() {
    let run = || {
        let mut tape = Tape::<f32>::new();
        let a = tape.input(Tensor::from_fn([4, 3], |i| (i as f32 * 0.37).sin()));
        let b = tape.input(Tensor::from_fn([3, 5], |i| (i as f32 * 0.11).cos()));
        let c = tape.matmul(a, b).unwrap();
        let d = tape.tanh(c);
        let s = tape.softmax(d, 1).unwrap();
        let l = tape.mean(s);
        let sq = tape.mul(l, l).unwrap();
        let g = tape.backward(sq).unwrap();
        (g.wrt(a).into_data(), g.wrt(b).into_data())
    };
    let (a1, b1) = run();
    let (a2, b2) = run();
    let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a1), bits(&a2));
    assert_eq!(bits(&b1), bits(&b2));
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(
        rows in 1usize..5,
        cols in 1usize..7,
        seed in any::<u64>(),
        scale in 0.1f32..20.0,
    ) {
        let data: Vec<f32> = (0..rows * cols)
            .map(|i| ((seed.wrapping_add(i as u64) % 1000) as f32 / 500.0 - 1.0) * scale)
            .collect();
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::new([rows, cols], data).unwrap());
        let y = tape.softmax(x, 1).unwrap();
        let out = tape.value(y);
        for r in 0..rows {
            let row = out.row(r);
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            let s: f32 = row.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
        }
    }
}
