use clam_numerics::{rng::Rng, ParamStore, Real, Tape, Tensor, Var};

use crate::error::{NeuralError, Result};
use crate::linear::Linear;

/// Multi-head scaled dot-product attention with input and output projections.
#[derive(Clone, Debug)]
pub struct MultiheadAttention {
    pub q_proj: Linear,
    pub k_proj: Linear,
    pub v_proj: Linear,
    pub out_proj: Linear,
    pub model_dim: usize,
    pub n_heads: usize,
}

impl MultiheadAttention {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        model_dim: usize,
        n_heads: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if n_heads == 0 || model_dim % n_heads != 0 {
            return Err(NeuralError::Config(format!(
                "model_dim {model_dim} not divisible by n_heads {n_heads}"
            )));
        }
        Ok(MultiheadAttention {
            q_proj: Linear::new(store, &format!("{prefix}.q"), model_dim, model_dim, rng)?,
            k_proj: Linear::new(store, &format!("{prefix}.k"), model_dim, model_dim, rng)?,
            v_proj: Linear::new(store, &format!("{prefix}.v"), model_dim, model_dim, rng)?,
            out_proj: Linear::new(store, &format!("{prefix}.out"), model_dim, model_dim, rng)?,
            model_dim,
            n_heads,
        })
    }

    pub fn bind<T: Real>(store: &ParamStore<T>, prefix: &str, n_heads: usize) -> Result<Self> {
        let q_proj = Linear::bind(store, &format!("{prefix}.q"))?;
        let model_dim = q_proj.in_dim;
        if n_heads == 0 || model_dim % n_heads != 0 {
            return Err(NeuralError::Config(format!(
                "model_dim {model_dim} not divisible by n_heads {n_heads}"
            )));
        }
        Ok(MultiheadAttention {
            q_proj,
            k_proj: Linear::bind(store, &format!("{prefix}.k"))?,
            v_proj: Linear::bind(store, &format!("{prefix}.v"))?,
            out_proj: Linear::bind(store, &format!("{prefix}.out"))?,
            model_dim,
            n_heads,
        })
    }

    /// `(B, T, d)` → `(B·h, T, d/h)`
    fn split_heads<T: Real>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let s = tape.shape(x).to_vec();
        let (b, t) = (s[0], s[1]);
        let dh = self.model_dim / self.n_heads;
        let x = tape.reshape(x, &[b, t, self.n_heads, dh])?;
        let x = tape.permute(x, &[0, 2, 1, 3])?;
        Ok(tape.reshape(x, &[b * self.n_heads, t, dh])?)
    }

    /// Attends `query` `(B, Tq, d)` over `memory` `(B, Tk, d)`.
    ///
    /// `mask` is `Tq×Tk`; `true` marks a blocked pair. Returns the output
    /// `(B, Tq, d)` and the attention weights `(B·h, Tq, Tk)`.
    pub fn forward_with_weights<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        query: Var,
        memory: Var,
        mask: Option<&[bool]>,
    ) -> Result<(Var, Var)> {
        let qs = tape.shape(query).to_vec();
        let ms = tape.shape(memory).to_vec();
        if qs.len() != 3 || ms.len() != 3 || qs[0] != ms[0] || qs[2] != self.model_dim || ms[2] != self.model_dim {
            return Err(NeuralError::Numerics(clam_numerics::NumericsError::ShapeMismatch {
                op: "multihead_attention",
                lhs: qs,
                rhs: ms,
            }));
        }
        let (b, tq, tk) = (qs[0], qs[1], ms[1]);
        let q = self.q_proj.forward(tape, store, query)?;
        let k = self.k_proj.forward(tape, store, memory)?;
        let v = self.v_proj.forward(tape, store, memory)?;
        let q = self.split_heads(tape, q)?;
        let k = self.split_heads(tape, k)?;
        let v = self.split_heads(tape, v)?;
        let kt = tape.transpose(k, 1, 2)?;
        let scores = tape.matmul(q, kt)?;
        let dh = (self.model_dim / self.n_heads) as f64;
        let mut scores = tape.scale(scores, T::lit(1.0 / dh.sqrt()));
        if let Some(mask) = mask {
            if mask.len() != tq * tk {
                return Err(NeuralError::Config(format!(
                    "mask has {} entries, expected {tq}×{tk}",
                    mask.len()
                )));
            }
            let additive = Tensor::new(
                [tq, tk],
                mask.iter()
                    .map(|&blocked| if blocked { T::neg_infinity() } else { T::zero() })
                    .collect(),
            )?;
            let additive = tape.constant(additive);
            scores = tape.add(scores, additive)?;
        }
        let weights = tape.softmax(scores, 2)?;
        let ctx = tape.matmul(weights, v)?;
        let dh = self.model_dim / self.n_heads;
        let ctx = tape.reshape(ctx, &[b, self.n_heads, tq, dh])?;
        let ctx = tape.permute(ctx, &[0, 2, 1, 3])?;
        let ctx = tape.reshape(ctx, &[b, tq, self.model_dim])?;
        let out = self.out_proj.forward(tape, store, ctx)?;
        Ok((out, weights))
    }

    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        query: Var,
        memory: Var,
        mask: Option<&[bool]>,
    ) -> Result<Var> {
        Ok(self.forward_with_weights(tape, store, query, memory, mask)?.0)
    }
}
