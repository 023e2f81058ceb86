use std::path::Path;

use clam_datastore::{Dataset, LamBatcher};
use clam_numerics::{rng, AdamConfig, AdamState, ParamId, Tape};

use crate::losses::{decoder_graph, recon_graph, LossBreakdown};
use crate::{CoreError, LamConfig, LamModel, Result};

pub const METRICS_HEADER: [&str; 5] = ["step", "l_recon", "l_ad", "l_vq", "l_total"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    pub losses: LossBreakdown,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// One row per LAM step.
    pub metrics: Vec<StepMetrics>,
    /// `(step, l_ad)` for the decoder-only phase of no-joint training.
    pub decoder_fit: Vec<(usize, f32)>,
}

fn check_finite(step: usize, what: &'static str, value: f32) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(CoreError::Divergence { step, what, value })
    }
}

fn apply(model: &mut LamModel, tape: &Tape, loss: clam_numerics::Var, opt: &mut AdamState) -> Result<()> {
    let grads = tape.backward(loss)?;
    model.store.zero_grad();
    grads.accumulate_into(&mut model.store);
    opt.step(&mut model.store)?;
    Ok(())
}

/// Trains a latent action model.
///
/// Joint mode: each step makes one reconstruction update (IDM, FDM,
/// codebook) followed by `labeled_ratio` decoder updates on `β·L_ad`,
/// which also reach the IDM unless `decoder_updates_idm` is off. No-joint
/// mode: reconstruction updates only, then `decoder_fit_steps` decoder
/// updates on frozen latents. `L_ad` is measured every step in both modes
/// when labeled data exist.
pub fn train_lam(
    config: &LamConfig,
    unlabeled: &Dataset,
    labeled: Option<&Dataset>,
    seed: u64,
) -> Result<(LamModel, TrainReport)> {
    config.validate()?;
    let env_hash = unlabeled.env_hash();
    if let Some(l) = labeled {
        if l.env_hash() != env_hash {
            return Err(CoreError::SpecMismatch {
                expected: env_hash,
                found: l.env_hash(),
            });
        }
        if l.trajectories().iter().any(|t| t.actions.is_none()) {
            return Err(CoreError::Unlabeled);
        }
    }
    let needs_labels = (config.joint_training && config.beta > 0.0)
        || (!config.joint_training && config.decoder_fit_steps > 0);
    if needs_labels && labeled.is_none() {
        return Err(CoreError::MissingLabeled);
    }
    let mut model = LamModel::new(
        config.clone(),
        unlabeled.obs_dim(),
        unlabeled.action_dim(),
        env_hash,
        rng::derive(seed, "lam-init"),
    )?;

    let recon_data = match labeled {
        Some(l) if config.recon_on_labeled => unlabeled.concat(&l.observations_only())?,
        _ => unlabeled.clone(),
    };
    let h = config.context;
    let mut recon_batches = LamBatcher::new(
        &recon_data,
        h,
        config.batch_size,
        config.include_padded,
        rng::labelled(seed, "recon-batches"),
    )?;
    let mut labeled_batches = labeled
        .map(|l| {
            LamBatcher::new(
                l,
                h,
                config.labeled_batch_size,
                config.include_padded,
                rng::labelled(seed, "labeled-batches"),
            )
        })
        .transpose()?;

    let adam = AdamConfig::with_lr(config.lr);
    let mut recon_ids: Vec<ParamId> = model.idm_param_ids();
    recon_ids.extend(model.fdm_param_ids());
    recon_ids.extend(model.codebook_id());
    let mut recon_opt = AdamState::new(adam, &model.store, &recon_ids);
    let mut decoder_ids = model.decoder_param_ids();
    if config.decoder_updates_idm {
        decoder_ids.extend(model.idm_param_ids());
    }
    let mut joint_opt = AdamState::new(adam, &model.store, &decoder_ids);
    let train_decoder = config.joint_training && config.beta > 0.0;

    let mut report = TrainReport::default();
    for step in 0..config.steps {
        let batch = recon_batches.next_batch();
        let mut tape = Tape::new();
        let g = recon_graph(&model, &mut tape, &batch)?;
        let l_recon = tape.value(g.recon).item();
        check_finite(step, "l_recon", l_recon)?;
        let mut loss = g.recon;
        let mut l_vq = 0.0;
        if let Some(vq) = g.vq {
            l_vq = tape.value(vq).item();
            check_finite(step, "l_vq", l_vq)?;
            loss = tape.add(loss, vq)?;
        }
        apply(&mut model, &tape, loss, &mut recon_opt)?;

        let mut l_ad = None;
        if let Some(lb) = labeled_batches.as_mut() {
            let rounds = if train_decoder { config.labeled_ratio } else { 1 };
            for _ in 0..rounds {
                let batch = lb.next_batch();
                let mut tape = Tape::new();
                let ad = decoder_graph(&model, &mut tape, &batch, config.decoder_updates_idm)?;
                let v = tape.value(ad).item();
                check_finite(step, "l_ad", v)?;
                l_ad = Some(v);
                if train_decoder {
                    let weighted = tape.scale(ad, config.beta as f32);
                    apply(&mut model, &tape, weighted, &mut joint_opt)?;
                }
            }
        }
        report.metrics.push(StepMetrics {
            step,
            losses: LossBreakdown::combine(l_recon, l_ad, l_vq, config.beta),
        });
    }

    if !config.joint_training {
        if let Some(l) = labeled {
            let mut batches = LamBatcher::new(
                l,
                h,
                config.labeled_batch_size,
                config.include_padded,
                rng::labelled(seed, "decoder-fit-batches"),
            )?;
            let mut opt = AdamState::new(adam, &model.store, &model.decoder_param_ids());
            for step in 0..config.decoder_fit_steps {
                let batch = batches.next_batch();
                let mut tape = Tape::new();
                let ad = decoder_graph(&model, &mut tape, &batch, false)?;
                let v = tape.value(ad).item();
                check_finite(step, "l_ad", v)?;
                apply(&mut model, &tape, ad, &mut opt)?;
                report.decoder_fit.push((step, v));
            }
        }
    }
    model.store.zero_grad();
    Ok((model, report))
}

fn fmt_opt(v: Option<f32>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `step,l_recon,l_ad,l_vq,l_total`; `l_ad` is empty when unmeasured.
pub fn write_metrics_csv(path: &Path, metrics: &[StepMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(METRICS_HEADER).map_err(csv_err)?;
    for m in metrics {
        let l = &m.losses;
        w.write_record([
            m.step.to_string(),
            l.l_recon.to_string(),
            fmt_opt(l.l_ad),
            l.l_vq.to_string(),
            l.l_total.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_decoder_fit_csv(path: &Path, rows: &[(usize, f32)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["step", "l_ad"]).map_err(csv_err)?;
    for (step, l) in rows {
        w.write_record([step.to_string(), l.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<StepMetrics>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header != METRICS_HEADER {
        return Err(CoreError::Config(format!("unexpected metrics header {header:?}")));
    }
    let parse = |s: &str| -> Result<f32> {
        s.parse()
            .map_err(|_| CoreError::Config(format!("bad number `{s}` in metrics file")))
    };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let l_ad = if rec[2].is_empty() { None } else { Some(parse(&rec[2])?) };
        out.push(StepMetrics {
            step: rec[0]
                .parse()
                .map_err(|_| CoreError::Config(format!("bad step `{}`", &rec[0])))?,
            losses: LossBreakdown {
                l_recon: parse(&rec[1])?,
                l_ad,
                l_vq: parse(&rec[3])?,
                l_total: parse(&rec[4])?,
            },
        });
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> CoreError {
    CoreError::Io(std::io::Error::other(e))
}
