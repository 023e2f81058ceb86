use clam_datastore::{lam_windows, Dataset, LamBatch};
use clam_neural::{Mlp, MlpSpec};
use clam_numerics::{rng, AdamConfig, AdamState, ParamStore, Tape, Tensor};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::{CoreError, LamModel, Result};

pub const MIN_DIAGNOSTIC_SAMPLES: usize = 100;
/// Copy-probe R² above which the latent is flagged as leaking `o_{t+1}`.
pub const COPY_WARNING_R2: f64 = 0.95;
const RIDGE_LAMBDA: f64 = 1e-3;
const PROBE_HIDDEN: usize = 128;
const PROBE_STEPS: usize = 4000;
const PROBE_BATCH: usize = 256;
const PROBE_LR: f64 = 3e-3;
const PROBE_HOLDOUT: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub struct DegeneracyReport {
    pub samples: usize,
    /// Mean per-dimension variance of `z`.
    pub latent_variance: f64,
    /// Ridge `z -> a_t` R².
    pub probe_r2_action: f64,
    /// Held-out R² of an MLP probe `z -> o_{t+1}`.
    pub probe_r2_copy: f64,
    /// Ridge `z -> o_{t+1}` R², in-sample.
    pub probe_r2_copy_linear: f64,
    /// `L_recon(shuffled z) - L_recon(z)`.
    pub shuffled_z_recon_gap: f64,
    pub copy_warning: bool,
}

/// Pooled R² of a centred ridge regression from `x` (`n × p`) to `y` (`n × q`).
/// Constant features give 0.
pub fn ridge_r2(x: &[f64], p: usize, y: &[f64], q: usize) -> f64 {
    let n = y.len() / q;
    let center = |v: &[f64], d: usize| {
        let mut m = DMatrix::from_row_slice(n, d, v);
        for mut c in m.column_iter_mut() {
            let mean = c.mean();
            c.add_scalar_mut(-mean);
        }
        m
    };
    let xc = center(x, p);
    let yc = center(y, q);
    let sst: f64 = yc.iter().map(|v| v * v).sum();
    if sst == 0.0 {
        return 0.0;
    }
    let xtx = xc.transpose() * &xc + DMatrix::identity(p, p) * RIDGE_LAMBDA;
    let xty = xc.transpose() * &yc;
    let w = match xtx.cholesky() {
        Some(c) => c.solve(&xty),
        None => return 0.0,
    };
    let resid = &yc - &xc * w;
    let sse: f64 = resid.iter().map(|v| v * v).sum();
    1.0 - sse / sst
}

/// Pooled held-out R² of a small MLP regressor from `x` (`n × p`) to `y`
/// (`n × q`). Inputs and targets are standardised with training-split
/// statistics; the last `PROBE_HOLDOUT` of a seeded permutation is scored.
pub fn mlp_probe_r2(x: &[f64], p: usize, y: &[f64], q: usize, seed: u64) -> Result<f64> {
    let n = y.len() / q;
    let n_test = ((n as f64) * PROBE_HOLDOUT).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(CoreError::TooFewSamples {
            needed: MIN_DIAGNOSTIC_SAMPLES,
            found: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::labelled(seed, "probe-split"));
    let (test, train) = order.split_at(n_test);

    let stats = |v: &[f64], d: usize| -> Vec<(f64, f64)> {
        (0..d)
            .map(|j| {
                let m = train.iter().map(|&i| v[i * d + j]).sum::<f64>() / train.len() as f64;
                let var = train.iter().map(|&i| (v[i * d + j] - m).powi(2)).sum::<f64>() / train.len() as f64;
                (m, if var > 0.0 { var.sqrt() } else { 1.0 })
            })
            .collect()
    };
    let (xs, ys) = (stats(x, p), stats(y, q));
    let rows = |v: &[f64], d: usize, st: &[(f64, f64)], idx: &[usize]| -> Tensor {
        let data = idx
            .iter()
            .flat_map(|&i| (0..d).map(move |j| ((v[i * d + j] - st[j].0) / st[j].1) as f32))
            .collect();
        Tensor::new([idx.len(), d], data).expect("row-major")
    };

    let mut store = ParamStore::new();
    let mut r = rng::labelled(seed, "probe-init");
    let mlp = Mlp::new(&mut store, "probe", MlpSpec::new(p, vec![PROBE_HIDDEN, PROBE_HIDDEN], q), &mut r)?;
    let ids = mlp.param_ids();
    let mut opt = AdamState::new(AdamConfig::with_lr(PROBE_LR), &store, &ids);
    let mut r = rng::labelled(seed, "probe-batches");
    for _ in 0..PROBE_STEPS {
        let idx: Vec<usize> = (0..PROBE_BATCH.min(train.len()))
            .map(|_| train[r.random_range(0..train.len())])
            .collect();
        let mut tape = Tape::new();
        let xv = tape.constant(rows(x, p, &xs, &idx));
        let yv = tape.constant(rows(y, q, &ys, &idx));
        let pred = mlp.forward(&mut tape, &store, xv)?;
        let loss = tape.mse(pred, yv)?;
        let grads = tape.backward(loss)?;
        store.zero_grad();
        grads.accumulate_into(&mut store);
        opt.step(&mut store)?;
    }

    let mut tape = Tape::new();
    let xv = tape.constant(rows(x, p, &xs, test));
    let pred = mlp.forward(&mut tape, &store, xv)?;
    let pred = tape.value(pred);
    let mut mean = vec![0.0; q];
    for &i in test {
        for j in 0..q {
            mean[j] += y[i * q + j] / n_test as f64;
        }
    }
    let (mut sse, mut sst) = (0.0, 0.0);
    for (k, &i) in test.iter().enumerate() {
        for j in 0..q {
            let yhat = pred.data()[k * q + j] as f64 * ys[j].1 + ys[j].0;
            sse += (y[i * q + j] - yhat).powi(2);
            sst += (y[i * q + j] - mean[j]).powi(2);
        }
    }
    Ok(if sst == 0.0 { 0.0 } else { 1.0 - sse / sst })
}

fn to_f64(t: &[f32]) -> Vec<f64> {
    t.iter().map(|&v| v as f64).collect()
}

/// Probes for collapsed or shortcut latents on a dataset with true actions.
/// Uses every non-padded window.
pub fn degeneracy_report(model: &LamModel, dataset: &Dataset, seed: u64) -> Result<DegeneracyReport> {
    if dataset.env_hash() != model.env_hash() {
        return Err(CoreError::SpecMismatch {
            expected: model.env_hash(),
            found: dataset.env_hash(),
        });
    }
    if dataset.trajectories().iter().any(|t| t.actions.is_none()) {
        return Err(CoreError::Unlabeled);
    }
    let h = model.config().context;
    let refs: Vec<_> = lam_windows(dataset, h).into_iter().filter(|w| !w.padded).collect();
    if refs.len() < MIN_DIAGNOSTIC_SAMPLES {
        return Err(CoreError::TooFewSamples {
            needed: MIN_DIAGNOSTIC_SAMPLES,
            found: refs.len(),
        });
    }
    let batch = LamBatch::gather(dataset, h, &refs);
    let n = refs.len();
    let l = model.latent_dim();
    let d = model.obs_dim();
    let z = model.latents(&batch.context)?;

    let zs = to_f64(z.data());
    let mut latent_variance = 0.0;
    for j in 0..l {
        let col: Vec<f64> = (0..n).map(|i| zs[i * l + j]).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        latent_variance += col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    }
    latent_variance /= l as f64;

    let actions = batch.actions.as_ref().expect("checked above");
    let probe_r2_action = ridge_r2(&zs, l, &to_f64(actions.data()), model.action_dim());

    let w = model.config().window_len();
    let mut context = Vec::with_capacity(n * (w - 1) * d);
    let mut next = Vec::with_capacity(n * d);
    for row in batch.context.data().chunks_exact(w * d) {
        context.extend_from_slice(&row[..(w - 1) * d]);
        next.extend_from_slice(&row[(w - 1) * d..]);
    }
    let next64 = to_f64(&next);
    let probe_r2_copy_linear = ridge_r2(&zs, l, &next64, d);
    let probe_r2_copy = mlp_probe_r2(&zs, l, &next64, d, seed)?;

    let context = Tensor::new([n, w - 1, d], context)?;
    let mse = |pred: &Tensor| -> f64 {
        pred.data()
            .iter()
            .zip(&next)
            .map(|(p, t)| ((p - t) as f64).powi(2))
            .sum::<f64>()
            / next.len() as f64
    };
    let base = mse(&model.predict_next(&context, &z)?);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::labelled(seed, "shuffle-z"));
    let shuffled: Vec<f32> = perm.iter().flat_map(|&i| z.row(i).to_vec()).collect();
    let shuffled = Tensor::new([n, l], shuffled)?;
    let gap = mse(&model.predict_next(&context, &shuffled)?) - base;

    Ok(DegeneracyReport {
        samples: n,
        latent_variance,
        probe_r2_action,
        probe_r2_copy,
        probe_r2_copy_linear,
        shuffled_z_recon_gap: gap,
        copy_warning: probe_r2_copy > COPY_WARNING_R2,
    })
}
