use clam_numerics::{Tape, Tensor, Var};

use crate::{CoreError, Result};

/// Index of the nearest row of `codebook` (`K × d`, flat) to `z`.
/// Ties go to the lowest index.
pub fn nearest_code(codebook: &[f32], dim: usize, z: &[f32]) -> Result<usize> {
    if codebook.is_empty() || dim == 0 {
        return Err(CoreError::EmptyCodebook);
    }
    if z.len() != dim {
        return Err(CoreError::Dim {
            what: "vq input",
            expected: dim,
            found: z.len(),
        });
    }
    let mut best = (0, f32::INFINITY);
    for (k, code) in codebook.chunks_exact(dim).enumerate() {
        let d: f32 = code.iter().zip(z).map(|(c, x)| (c - x) * (c - x)).sum();
        if d < best.1 {
            best = (k, d);
        }
    }
    Ok(best.0)
}

pub struct VqOutput {
    /// Straight-through output: forward value is the selected code, the
    /// gradient passes to `z` unchanged.
    pub quantized: Var,
    pub indices: Vec<usize>,
    /// `mse(code, sg(z)) + commitment * mse(z, sg(code))`.
    pub loss: Var,
    pub codebook_loss: Var,
    pub commitment_loss: Var,
}

/// Quantizes each row of `z` (`[B, d]`) against `codebook` (`[K, d]`).
pub fn vq_quantize(tape: &mut Tape, codebook: Var, z: Var, commitment: f32) -> Result<VqOutput> {
    let cb_shape = tape.shape(codebook).to_vec();
    if cb_shape.len() != 2 || cb_shape[0] == 0 {
        return Err(CoreError::EmptyCodebook);
    }
    let dim = cb_shape[1];
    let z_shape = tape.shape(z).to_vec();
    if z_shape.len() != 2 || z_shape[1] != dim {
        return Err(CoreError::Dim {
            what: "vq input",
            expected: dim,
            found: *z_shape.last().unwrap_or(&0),
        });
    }
    let indices = {
        let cb = tape.value(codebook).data();
        let zv = tape.value(z).data();
        zv.chunks_exact(dim)
            .map(|row| nearest_code(cb, dim, row))
            .collect::<Result<Vec<_>>>()?
    };
    let codes = tape.embedding_lookup(codebook, &indices)?;
    let code_values: Tensor = tape.value(codes).clone();
    let fixed = tape.constant(code_values);
    let z_sg = tape.detach(z);
    let passthrough = tape.sub(z, z_sg)?;
    let quantized = tape.add(fixed, passthrough)?;
    let codebook_loss = tape.mse(codes, z_sg)?;
    let codes_sg = tape.detach(codes);
    let commitment_loss = tape.mse(z, codes_sg)?;
    let weighted = tape.scale(commitment_loss, commitment);
    let loss = tape.add(codebook_loss, weighted)?;
    Ok(VqOutput {
        quantized,
        indices,
        loss,
        codebook_loss,
        commitment_loss,
    })
}
