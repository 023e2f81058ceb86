//! Central-difference gradient checker.
//!
//! Analytic gradients come from an `f32` reverse sweep; the reference is a
//! central difference of the same forward graph replayed in `f64`. Outputs
//! are projected onto a fixed random direction so every op reduces to a
//! scalar.

use rand::Rng as _;

use crate::error::Result;
use crate::real::Real;
use crate::rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// An op (or composite) checkable in both precisions.
pub trait CheckedOp {
    fn apply<T: Real>(&self, tape: &mut Tape<T>, inputs: &[Var]) -> Result<Var>;

    /// Rejects sample points too close to a non-differentiable kink.
    fn admissible(&self, _inputs: &[Tensor<f64>]) -> bool {
        true
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Per-input `|analytic - numeric| / |numeric|` (Euclidean norms).
    pub per_input: Vec<f64>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    /// Compares analytic against reference gradients input by input.
    pub fn compare(analytic: &[Tensor<f64>], numeric: &[Tensor<f64>], tolerance: f64) -> Self {
        let per_input: Vec<f64> = analytic
            .iter()
            .zip(numeric)
            .map(|(a, n)| {
                let diff = a
                    .data()
                    .iter()
                    .zip(n.data())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                let scale = n.data().iter().map(|y| y * y).sum::<f64>().sqrt();
                if scale < 1e-8 {
                    diff
                } else {
                    diff / scale
                }
            })
            .collect();
        let max_rel_error = per_input.iter().copied().fold(0.0, f64::max);
        GradCheckReport {
            passed: max_rel_error < tolerance,
            per_input,
            max_rel_error,
            tolerance,
        }
    }
}

/// Step of the central difference.
pub const FD_STEP: f64 = 1e-3;

fn projected<T: Real, O: CheckedOp>(
    op: &O,
    tape: &mut Tape<T>,
    vars: &[Var],
    direction: &[f64],
) -> Result<Var> {
    let out = op.apply(tape, vars)?;
    let shape = tape.shape(out).to_vec();
    let w = Tensor::new(shape, direction.iter().map(|&x| T::lit(x)).collect())?;
    let w = tape.constant(w);
    let prod = tape.mul(out, w)?;
    Ok(tape.sum(prod))
}

fn round_to_f32(t: &Tensor<f64>) -> Tensor<f64> {
    t.map(|x| x as f32 as f64)
}

/// Analytic (`f32`) gradients of the projected op at `inputs`.
pub fn analytic_gradients<O: CheckedOp>(
    op: &O,
    inputs: &[Tensor<f64>],
    direction: &[f64],
) -> Result<Vec<Tensor<f64>>> {
    let mut tape = Tape::<f32>::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.input(x.cast())).collect();
    let loss = projected(op, &mut tape, &vars, direction)?;
    let grads = tape.backward(loss)?;
    Ok(vars.iter().map(|&v| grads.wrt(v).cast()).collect())
}

/// Central-difference (`f64`) gradients of the projected op at `inputs`.
pub fn numeric_gradients<O: CheckedOp>(
    op: &O,
    inputs: &[Tensor<f64>],
    direction: &[f64],
    step: f64,
) -> Result<Vec<Tensor<f64>>> {
    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::<f64>::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.input(x.clone())).collect();
        let loss = projected(op, &mut tape, &vars, direction)?;
        Ok(tape.value(loss).item())
    };
    let mut out = Vec::with_capacity(inputs.len());
    let mut xs = inputs.to_vec();
    for i in 0..inputs.len() {
        let mut g = Vec::with_capacity(inputs[i].numel());
        for j in 0..inputs[i].numel() {
            let orig = xs[i].data()[j];
            xs[i].data_mut()[j] = orig + step;
            let plus = eval(&xs)?;
            xs[i].data_mut()[j] = orig - step;
            let minus = eval(&xs)?;
            xs[i].data_mut()[j] = orig;
            g.push((plus - minus) / (2.0 * step));
        }
        out.push(Tensor::new(inputs[i].shape().to_vec(), g)?);
    }
    Ok(out)
}

fn direction_for<O: CheckedOp>(op: &O, inputs: &[Tensor<f64>], seed: u64) -> Result<Vec<f64>> {
    let mut tape = Tape::<f64>::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.constant(x.clone())).collect();
    let out = op.apply(&mut tape, &vars)?;
    let mut r = rng::labelled(seed, "gradcheck-direction");
    Ok((0..tape.value(out).numel())
        .map(|_| r.random_range(-1.0f64..1.0) as f32 as f64)
        .collect())
}

/// Checks `op` at the given point.
pub fn grad_check_at<O: CheckedOp>(
    op: &O,
    inputs: &[Tensor<f64>],
    seed: u64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let inputs: Vec<Tensor<f64>> = inputs.iter().map(round_to_f32).collect();
    let direction = direction_for(op, &inputs, seed)?;
    let analytic = analytic_gradients(op, &inputs, &direction)?;
    let numeric = numeric_gradients(op, &inputs, &direction, FD_STEP)?;
    Ok(GradCheckReport::compare(&analytic, &numeric, tolerance))
}

/// Checks `op` at a random point drawn uniformly from `[-1, 1]` with the
/// given input shapes, redrawing points the op marks inadmissible.
pub fn grad_check<O: CheckedOp>(
    op: &O,
    input_shapes: &[Vec<usize>],
    seed: u64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let mut r = rng::labelled(seed, "gradcheck-inputs");
    let mut inputs = Vec::new();
    for _ in 0..64 {
        inputs = input_shapes
            .iter()
            .map(|s| Tensor::from_fn(s.clone(), |_| r.random_range(-1.0..1.0)))
            .collect::<Vec<_>>();
        if op.admissible(&inputs) {
            break;
        }
    }
    grad_check_at(op, &inputs, seed, tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Identity;
    impl CheckedOp for Identity {
        fn apply<T: Real>(&self, _tape: &mut Tape<T>, inputs: &[Var]) -> Result<Var> {
            Ok(inputs[0])
        }
    }

    struct Cube;
    impl CheckedOp for Cube {
        fn apply<T: Real>(&self, tape: &mut Tape<T>, inputs: &[Var]) -> Result<Var> {
            let sq = tape.mul(inputs[0], inputs[0])?;
            tape.mul(sq, inputs[0])
        }
    }

    #[test]
    fn identity_has_zero_error() {
        let r = grad_check(&Identity, &[vec![3, 2]], 0, 1e-4).unwrap();
        assert!(r.max_rel_error < 1e-9, "{r:?}");
        assert!(r.passed);
    }

    #[test]
    fn corrupted_gradient_fails_with_unit_error() {
        let x = Tensor::<f64>::new([4], vec![0.3, -0.5, 0.9, 0.1]).unwrap();
        let dir = direction_for(&Cube, &[x.clone()], 1).unwrap();
        let analytic = analytic_gradients(&Cube, &[x.clone()], &dir).unwrap();
        let numeric = numeric_gradients(&Cube, &[x], &dir, FD_STEP).unwrap();
        let doubled: Vec<Tensor<f64>> = analytic.iter().map(|t| t.map(|v| 2.0 * v)).collect();
        let bad = GradCheckReport::compare(&doubled, &numeric, 1e-4);
        assert!(!bad.passed);
        assert!((bad.max_rel_error - 1.0).abs() < 1e-3, "{bad:?}");
        let good = GradCheckReport::compare(&analytic, &numeric, 1e-4);
        assert!(good.passed, "{good:?}");
    }
}
