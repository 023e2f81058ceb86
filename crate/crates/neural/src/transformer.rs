//! Post-norm transformer blocks.
//!
//! The encoder block is unmasked self-attention plus feed-forward. The
//! decoder block runs causally masked self-attention, then cross-attention
//! over a latent sequence (unmasked unless requested), then feed-forward.
//! Every sub-layer is `norm(x + branch(x))`.

use clam_numerics::{rng::Rng, ParamId, ParamStore, Real, Tape, Tensor, Var, LEAKY_SLOPE};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::attention::MultiheadAttention;
use crate::error::{NeuralError, Result};
use crate::linear::Linear;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerSpec {
    pub model_dim: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub ff_dim: usize,
    #[serde(default)]
    pub dropout_rate: f64,
    pub max_sequence_len: usize,
}

impl TransformerSpec {
    /// Small enough to train on one CPU core in minutes.
    pub fn desk(max_sequence_len: usize) -> Self {
        TransformerSpec {
            model_dim: 64,
            n_heads: 4,
            n_layers: 2,
            ff_dim: 256,
            dropout_rate: 0.0,
            max_sequence_len,
        }
    }

    pub fn full_scale(max_sequence_len: usize) -> Self {
        TransformerSpec {
            model_dim: 256,
            n_heads: 8,
            n_layers: 3,
            ff_dim: 2048,
            dropout_rate: 0.1,
            max_sequence_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || self.model_dim == 0 || self.model_dim % self.n_heads != 0 {
            return Err(NeuralError::Config(format!(
                "model_dim {} not divisible by n_heads {}",
                self.model_dim, self.n_heads
            )));
        }
        if self.n_layers == 0 || self.ff_dim == 0 || self.max_sequence_len == 0 {
            return Err(NeuralError::Config(format!("degenerate transformer spec {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NeuralError::Config(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// `T×T` mask blocking attention to later positions.
pub fn causal_mask(t: usize) -> Vec<bool> {
    (0..t * t).map(|i| i % t > i / t).collect()
}

/// Inverted dropout; identity when `rng` is `None` or `rate` is zero.
pub fn dropout<T: Real>(tape: &mut Tape<T>, x: Var, rate: f64, rng: Option<&mut Rng>) -> Result<Var> {
    let Some(rng) = rng else { return Ok(x) };
    if rate <= 0.0 {
        return Ok(x);
    }
    let keep = T::lit(1.0 / (1.0 - rate));
    let shape = tape.shape(x).to_vec();
    let mask = Tensor::from_fn(shape, |_| if rng.random::<f64>() < rate { T::zero() } else { keep });
    let mask = tape.constant(mask);
    Ok(tape.mul(x, mask)?)
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new<T: Real>(store: &mut ParamStore<T>, prefix: &str, dim: usize) -> Result<Self> {
        Ok(LayerNorm {
            gamma: store.insert(format!("{prefix}.gamma"), Tensor::full([dim], T::one()))?,
            beta: store.insert(format!("{prefix}.beta"), Tensor::zeros([dim]))?,
        })
    }

    pub fn bind<T: Real>(store: &ParamStore<T>, prefix: &str) -> Result<Self> {
        Ok(LayerNorm {
            gamma: store.id(&format!("{prefix}.gamma"))?,
            beta: store.id(&format!("{prefix}.beta"))?,
        })
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let g = tape.param(store, self.gamma);
        let b = tape.param(store, self.beta);
        Ok(tape.layer_norm(x, g, b, T::lit(Self::EPS))?)
    }
}

#[derive(Clone, Debug)]
struct FeedForward {
    linear1: Linear,
    linear2: Linear,
}

impl FeedForward {
    fn new<T: Real>(store: &mut ParamStore<T>, prefix: &str, spec: &TransformerSpec, rng: &mut Rng) -> Result<Self> {
        Ok(FeedForward {
            linear1: Linear::new(store, &format!("{prefix}.linear1"), spec.model_dim, spec.ff_dim, rng)?,
            linear2: Linear::new(store, &format!("{prefix}.linear2"), spec.ff_dim, spec.model_dim, rng)?,
        })
    }

    fn bind<T: Real>(store: &ParamStore<T>, prefix: &str) -> Result<Self> {
        Ok(FeedForward {
            linear1: Linear::bind(store, &format!("{prefix}.linear1"))?,
            linear2: Linear::bind(store, &format!("{prefix}.linear2"))?,
        })
    }

    fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let h = self.linear1.forward(tape, store, x)?;
        let h = tape.leaky_relu(h, T::lit(LEAKY_SLOPE));
        self.linear2.forward(tape, store, h)
    }
}

fn check_len(len: usize, spec: &TransformerSpec) -> Result<()> {
    if len > spec.max_sequence_len {
        return Err(NeuralError::SequenceTooLong {
            len,
            max: spec.max_sequence_len,
        });
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct EncoderBlock {
    pub self_attn: MultiheadAttention,
    ff: FeedForward,
    pub norm1: LayerNorm,
    pub norm2: LayerNorm,
    spec: TransformerSpec,
}

impl EncoderBlock {
    pub fn new<T: Real>(store: &mut ParamStore<T>, prefix: &str, spec: &TransformerSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        Ok(EncoderBlock {
            self_attn: MultiheadAttention::new(store, &format!("{prefix}.self_attn"), spec.model_dim, spec.n_heads, rng)?,
            ff: FeedForward::new(store, prefix, spec, rng)?,
            norm1: LayerNorm::new(store, &format!("{prefix}.norm1"), spec.model_dim)?,
            norm2: LayerNorm::new(store, &format!("{prefix}.norm2"), spec.model_dim)?,
            spec: spec.clone(),
        })
    }

    pub fn bind<T: Real>(store: &ParamStore<T>, prefix: &str, spec: &TransformerSpec) -> Result<Self> {
        spec.validate()?;
        Ok(EncoderBlock {
            self_attn: MultiheadAttention::bind(store, &format!("{prefix}.self_attn"), spec.n_heads)?,
            ff: FeedForward::bind(store, prefix)?,
            norm1: LayerNorm::bind(store, &format!("{prefix}.norm1"))?,
            norm2: LayerNorm::bind(store, &format!("{prefix}.norm2"))?,
            spec: spec.clone(),
        })
    }

    /// `x` is `(B, T, model_dim)`; output has the same shape.
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        mut rng: Option<&mut Rng>,
    ) -> Result<Var> {
        check_len(tape.shape(x)[1], &self.spec)?;
        let a = self.self_attn.forward(tape, store, x, x, None)?;
        let a = dropout(tape, a, self.spec.dropout_rate, rng.as_deref_mut())?;
        let h = tape.add(x, a)?;
        let h = self.norm1.forward(tape, store, h)?;
        let f = self.ff.forward(tape, store, h)?;
        let f = dropout(tape, f, self.spec.dropout_rate, rng.as_deref_mut())?;
        let out = tape.add(h, f)?;
        self.norm2.forward(tape, store, out)
    }
}

#[derive(Clone, Debug)]
pub struct DecoderBlock {
    pub self_attn: MultiheadAttention,
    pub cross_attn: MultiheadAttention,
    ff: FeedForward,
    pub norm1: LayerNorm,
    pub norm2: LayerNorm,
    pub norm3: LayerNorm,
    spec: TransformerSpec,
    /// Apply a causal mask to cross-attention too (exploration only).
    pub causal_cross: bool,
}

impl DecoderBlock {
    pub fn new<T: Real>(store: &mut ParamStore<T>, prefix: &str, spec: &TransformerSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        Ok(DecoderBlock {
            self_attn: MultiheadAttention::new(store, &format!("{prefix}.self_attn"), spec.model_dim, spec.n_heads, rng)?,
            cross_attn: MultiheadAttention::new(store, &format!("{prefix}.cross_attn"), spec.model_dim, spec.n_heads, rng)?,
            ff: FeedForward::new(store, prefix, spec, rng)?,
            norm1: LayerNorm::new(store, &format!("{prefix}.norm1"), spec.model_dim)?,
            norm2: LayerNorm::new(store, &format!("{prefix}.norm2"), spec.model_dim)?,
            norm3: LayerNorm::new(store, &format!("{prefix}.norm3"), spec.model_dim)?,
            spec: spec.clone(),
            causal_cross: false,
        })
    }

    pub fn bind<T: Real>(store: &ParamStore<T>, prefix: &str, spec: &TransformerSpec) -> Result<Self> {
        spec.validate()?;
        Ok(DecoderBlock {
            self_attn: MultiheadAttention::bind(store, &format!("{prefix}.self_attn"), spec.n_heads)?,
            cross_attn: MultiheadAttention::bind(store, &format!("{prefix}.cross_attn"), spec.n_heads)?,
            ff: FeedForward::bind(store, prefix)?,
            norm1: LayerNorm::bind(store, &format!("{prefix}.norm1"))?,
            norm2: LayerNorm::bind(store, &format!("{prefix}.norm2"))?,
            norm3: LayerNorm::bind(store, &format!("{prefix}.norm3"))?,
            spec: spec.clone(),
            causal_cross: false,
        })
    }

    /// `x` is `(B, T, d)`, `latents` `(B, Tz, d)`. With `latents = None` the
    /// cross-attention branch is skipped (its residual contributes zero).
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        latents: Option<Var>,
        mut rng: Option<&mut Rng>,
    ) -> Result<Var> {
        let t = tape.shape(x)[1];
        check_len(t, &self.spec)?;
        let mask = causal_mask(t);
        let a = self.self_attn.forward(tape, store, x, x, Some(&mask))?;
        let a = dropout(tape, a, self.spec.dropout_rate, rng.as_deref_mut())?;
        let h = tape.add(x, a)?;
        let mut h = self.norm1.forward(tape, store, h)?;
        if let Some(z) = latents {
            let tz = tape.shape(z)[1];
            check_len(tz, &self.spec)?;
            let cross_mask: Option<Vec<bool>> = self
                .causal_cross
                .then(|| (0..t * tz).map(|i| i % tz > i / tz).collect());
            let c = self.cross_attn.forward(tape, store, h, z, cross_mask.as_deref())?;
            let c = dropout(tape, c, self.spec.dropout_rate, rng.as_deref_mut())?;
            h = tape.add(h, c)?;
        }
        let h = self.norm2.forward(tape, store, h)?;
        let f = self.ff.forward(tape, store, h)?;
        let f = dropout(tape, f, self.spec.dropout_rate, rng.as_deref_mut())?;
        let out = tape.add(h, f)?;
        self.norm3.forward(tape, store, out)
    }
}
