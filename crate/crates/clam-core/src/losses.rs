use clam_datastore::LamBatch;
use clam_numerics::{Gradients, Tape, Var};

use crate::{CoreError, LamModel, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub l_recon: f32,
    /// Absent when no labeled batch was supplied.
    pub l_ad: Option<f32>,
    pub l_vq: f32,
    pub l_total: f32,
}

impl LossBreakdown {
    pub fn combine(l_recon: f32, l_ad: Option<f32>, l_vq: f32, beta: f64) -> Self {
        let l_total = l_recon + l_vq + l_ad.map_or(0.0, |a| beta as f32 * a);
        LossBreakdown {
            l_recon,
            l_ad,
            l_vq,
            l_total,
        }
    }
}

pub struct LossEvaluation {
    pub losses: LossBreakdown,
    /// Gradients of `l_total` for every parameter on the graph.
    pub grads: Gradients,
}

pub(crate) struct ReconGraph {
    pub recon: Var,
    pub vq: Option<Var>,
}

/// Reconstruction path: IDM on the full window, optional quantization,
/// FDM from context and latent, MSE against `o_{t+1}`.
pub(crate) fn recon_graph(model: &LamModel, tape: &mut Tape, batch: &LamBatch) -> Result<ReconGraph> {
    let window = tape.constant(batch.context.clone());
    let (context, target) = model.split_window(tape, window)?;
    let z = model.idm_forward(tape, window)?;
    let (z, vq) = if model.is_vq() {
        let q = model.quantize(tape, z)?;
        (q.quantized, Some(q.loss))
    } else {
        (z, None)
    };
    let pred = model.fdm_forward(tape, context, z)?;
    let recon = tape.mse(pred, target)?;
    Ok(ReconGraph { recon, vq })
}

/// Action-decoder path on a labeled batch. With `idm_grad = false` the
/// latents are detached, leaving only the decoder trainable.
pub(crate) fn decoder_graph(model: &LamModel, tape: &mut Tape, batch: &LamBatch, idm_grad: bool) -> Result<Var> {
    let actions = batch.actions.clone().ok_or(CoreError::Unlabeled)?;
    let window = tape.constant(batch.context.clone());
    let mut z = model.idm_forward(tape, window)?;
    if !idm_grad {
        z = tape.detach(z);
    }
    if model.is_vq() {
        z = model.quantize(tape, z)?.quantized;
    }
    let pred = model.action_decode(tape, z)?;
    let target = tape.constant(actions);
    Ok(tape.mse(pred, target)?)
}

/// `L_total = L_recon + β·L_ad (+ L_vq)` on one graph. A labeled batch is
/// required under joint training with `β > 0`.
pub fn clam_losses(model: &LamModel, unlabeled: &LamBatch, labeled: Option<&LamBatch>) -> Result<LossEvaluation> {
    let cfg = model.config();
    if labeled.is_none() && cfg.joint_training && cfg.beta > 0.0 {
        return Err(CoreError::MissingLabeled);
    }
    let mut tape = Tape::new();
    let g = recon_graph(model, &mut tape, unlabeled)?;
    let mut total = g.recon;
    let mut l_vq = 0.0;
    if let Some(vq) = g.vq {
        l_vq = tape.value(vq).item();
        total = tape.add(total, vq)?;
    }
    let mut l_ad = None;
    if let Some(batch) = labeled {
        let ad = decoder_graph(model, &mut tape, batch, cfg.decoder_updates_idm)?;
        l_ad = Some(tape.value(ad).item());
        let weighted = tape.scale(ad, cfg.beta as f32);
        total = tape.add(total, weighted)?;
    }
    let losses = LossBreakdown {
        l_recon: tape.value(g.recon).item(),
        l_ad,
        l_vq,
        l_total: tape.value(total).item(),
    };
    let grads = tape.backward(total)?;
    Ok(LossEvaluation { losses, grads })
}
