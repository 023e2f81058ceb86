use clam_datastore::{lam_windows, Dataset, LamBatch};

use crate::{CoreError, LamModel, Result};

const CHUNK: usize = 2048;

/// Annotates every transition (including padded episode starts) with the
/// IDM latent, quantized in VQ mode. The FDM is not used.
pub fn relabel(model: &LamModel, dataset: &Dataset) -> Result<Dataset> {
    if dataset.env_hash() != model.env_hash() {
        return Err(CoreError::SpecMismatch {
            expected: model.env_hash(),
            found: dataset.env_hash(),
        });
    }
    if dataset.obs_dim() != model.obs_dim() {
        return Err(CoreError::Dim {
            what: "dataset obs_dim",
            expected: model.obs_dim(),
            found: dataset.obs_dim(),
        });
    }
    let l = model.latent_dim();
    let windows = lam_windows(dataset, model.config().context);
    let mut per_traj: Vec<Vec<f32>> = dataset
        .trajectories()
        .iter()
        .map(|t| Vec::with_capacity(t.transitions() * l))
        .collect();
    for chunk in windows.chunks(CHUNK) {
        let batch = LamBatch::gather(dataset, model.config().context, chunk);
        let z = model.latents(&batch.context)?;
        for (r, row) in chunk.iter().zip(z.data().chunks_exact(l)) {
            per_traj[r.traj].extend_from_slice(row);
        }
    }
    Ok(dataset.clone().with_latents(l, per_traj)?)
}
