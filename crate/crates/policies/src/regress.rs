use clam_neural::Mlp;
use clam_numerics::{rng::Rng, AdamConfig, AdamState, ParamStore, Tape, Tensor};
use rand::Rng as _;

use crate::{PolicyError, Result};

/// Row-major supervised pairs.
pub(crate) struct Pairs {
    pub x: Vec<f32>,
    pub in_dim: usize,
    pub y: Vec<f32>,
    pub out_dim: usize,
}

impl Pairs {
    pub fn new(in_dim: usize, out_dim: usize) -> Self {
        Pairs {
            x: Vec::new(),
            in_dim,
            y: Vec::new(),
            out_dim,
        }
    }

    pub fn len(&self) -> usize {
        self.y.len() / self.out_dim
    }

    pub fn push(&mut self, x: &[f32], y: &[f32]) {
        self.x.extend_from_slice(x);
        self.y.extend_from_slice(y);
    }
}

/// Minibatch Adam on `mse(mlp(x), y)`; returns the loss per step.
pub(crate) fn fit(
    store: &mut ParamStore,
    mlp: &Mlp,
    data: &Pairs,
    steps: usize,
    batch_size: usize,
    lr: f64,
    rng: &mut Rng,
) -> Result<Vec<f32>> {
    let n = data.len();
    if n == 0 {
        return Err(PolicyError::Config("no training pairs".into()));
    }
    let mut opt = AdamState::new(AdamConfig::with_lr(lr), store, &mlp.param_ids());
    let (din, dout) = (data.in_dim, data.out_dim);
    let mut losses = Vec::with_capacity(steps);
    let mut xb = Vec::with_capacity(batch_size * din);
    let mut yb = Vec::with_capacity(batch_size * dout);
    for step in 0..steps {
        xb.clear();
        yb.clear();
        for _ in 0..batch_size {
            let i = rng.random_range(0..n);
            xb.extend_from_slice(&data.x[i * din..(i + 1) * din]);
            yb.extend_from_slice(&data.y[i * dout..(i + 1) * dout]);
        }
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new([batch_size, din], xb.clone())?);
        let y = tape.constant(Tensor::new([batch_size, dout], yb.clone())?);
        let pred = mlp.forward(&mut tape, store, x)?;
        let loss = tape.mse(pred, y)?;
        let v = tape.value(loss).item();
        if !v.is_finite() {
            return Err(PolicyError::Divergence { step });
        }
        losses.push(v);
        let grads = tape.backward(loss)?;
        store.zero_grad();
        grads.accumulate_into(store);
        opt.step(store)?;
    }
    store.zero_grad();
    Ok(losses)
}

/// `mlp` applied to `[B, in]` rows.
pub(crate) fn predict(store: &ParamStore, mlp: &Mlp, x: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let out = mlp.forward(&mut tape, store, xv)?;
    Ok(tape.value(out).clone())
}

pub(crate) fn mse(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f32>() / a.len().max(1) as f32
}
