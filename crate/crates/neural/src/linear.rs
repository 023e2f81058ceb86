use clam_numerics::{rng::Rng, ParamId, ParamStore, Real, Tape, Tensor, Var};

use crate::error::{NeuralError, Result};
use crate::init::kaiming_uniform;

/// Affine map `x @ W + b` over the last axis.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    /// Registers `{prefix}.weight` (`in×out`) and `{prefix}.bias` (`out`).
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(NeuralError::Config(format!(
                "{prefix}: dims must be positive ({in_dim}→{out_dim})"
            )));
        }
        let weight = store.insert(format!("{prefix}.weight"), kaiming_uniform(rng, in_dim, out_dim))?;
        let bias = store.insert(format!("{prefix}.bias"), Tensor::zeros([out_dim]))?;
        Ok(Linear {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    /// Rebinds a layer to parameters already present in `store`.
    pub fn bind<T: Real>(store: &ParamStore<T>, prefix: &str) -> Result<Self> {
        let weight = store.id(&format!("{prefix}.weight"))?;
        let bias = store.id(&format!("{prefix}.bias"))?;
        let shape = store.value(weight).shape();
        if shape.len() != 2 || store.value(bias).shape() != [shape[1]] {
            return Err(NeuralError::Config(format!("{prefix}: inconsistent parameter shapes")));
        }
        Ok(Linear {
            weight,
            bias,
            in_dim: shape[0],
            out_dim: shape[1],
        })
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let found = tape.shape(x).last().copied().unwrap_or(0);
        if found != self.in_dim {
            return Err(NeuralError::InputDim {
                layer: store.name(self.weight).to_string(),
                expected: self.in_dim,
                found,
            });
        }
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let y = tape.matmul(x, w)?;
        Ok(tape.add(y, b)?)
    }
}
