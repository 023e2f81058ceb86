use std::path::Path;

use clam_neural::{
    init, read_checkpoint, write_checkpoint, DecoderBlock, EncoderBlock, Linear, Mlp, MlpSpec, TransformerSpec,
};
use clam_numerics::{rng, ParamId, ParamStore, Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::vq::{nearest_code, vq_quantize, VqOutput};
use crate::{CoreError, LamConfig, LatentMode, Result, Trunk};

/// Learned absolute positions plus a stack of blocks.
#[derive(Clone, Debug)]
struct Embed {
    input: Linear,
    pos: ParamId,
}

impl Embed {
    fn new(store: &mut ParamStore, prefix: &str, in_dim: usize, spec: &TransformerSpec, r: &mut rng::Rng) -> Result<Self> {
        let input = Linear::new(store, &format!("{prefix}.input"), in_dim, spec.model_dim, r)?;
        let pos = store.insert(
            format!("{prefix}.pos"),
            init::uniform(r, &[spec.max_sequence_len, spec.model_dim], 0.02),
        )?;
        Ok(Embed { input, pos })
    }

    fn bind(store: &ParamStore, prefix: &str) -> Result<Self> {
        Ok(Embed {
            input: Linear::bind(store, &format!("{prefix}.input"))?,
            pos: store.id(&format!("{prefix}.pos"))?,
        })
    }

    /// `(B, T, in) -> (B, T, d)`.
    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let t = tape.shape(x)[1];
        let h = self.input.forward(tape, store, x)?;
        let pos = tape.param(store, self.pos);
        let pos = tape.slice(pos, 0, 0, t)?;
        Ok(tape.add(h, pos)?)
    }
}

#[derive(Clone, Debug)]
enum IdmNet {
    Mlp(Mlp),
    Transformer {
        embed: Embed,
        blocks: Vec<EncoderBlock>,
        head: Linear,
    },
}

#[derive(Clone, Debug)]
enum FdmNet {
    Mlp(Mlp),
    Transformer {
        embed: Embed,
        latent_proj: Linear,
        blocks: Vec<DecoderBlock>,
        head: Linear,
    },
}

/// What a checkpoint needs besides the tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LamMeta {
    pub config: LamConfig,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub env_hash: u64,
}

#[derive(Clone, Debug)]
pub struct LamModel {
    meta: LamMeta,
    pub store: ParamStore,
    idm: IdmNet,
    fdm: FdmNet,
    decoder: Mlp,
    codebook: Option<ParamId>,
}

fn idm_mlp_spec(meta: &LamMeta, hidden: &[usize]) -> MlpSpec {
    MlpSpec::new(meta.config.window_len() * meta.obs_dim, hidden.to_vec(), meta.config.latent_dim)
}

fn fdm_mlp_spec(meta: &LamMeta, hidden: &[usize]) -> MlpSpec {
    MlpSpec::new(
        (meta.config.context + 1) * meta.obs_dim + meta.config.latent_dim,
        hidden.to_vec(),
        meta.obs_dim,
    )
}

fn decoder_spec(meta: &LamMeta) -> MlpSpec {
    MlpSpec::new(meta.config.latent_dim, meta.config.decoder_hidden_dims.clone(), meta.action_dim).with_tanh()
}

impl LamModel {
    /// Fresh parameters. The decoder's output layer starts at zero, so an
    /// untrained decoder emits the no-op action.
    pub fn new(config: LamConfig, obs_dim: usize, action_dim: usize, env_hash: u64, seed: u64) -> Result<Self> {
        config.validate()?;
        if obs_dim == 0 || action_dim == 0 {
            return Err(CoreError::Config("obs_dim and action_dim must be positive".into()));
        }
        let meta = LamMeta {
            config,
            obs_dim,
            action_dim,
            env_hash,
        };
        let cfg = &meta.config;
        let mut store = ParamStore::new();
        let mut r = rng::labelled(seed, "idm-init");
        let idm = match &cfg.trunk {
            Trunk::Mlp { hidden_dims } => IdmNet::Mlp(Mlp::new(&mut store, "idm", idm_mlp_spec(&meta, hidden_dims), &mut r)?),
            Trunk::Transformer(spec) => IdmNet::Transformer {
                embed: Embed::new(&mut store, "idm", obs_dim, spec, &mut r)?,
                blocks: (0..spec.n_layers)
                    .map(|i| EncoderBlock::new(&mut store, &format!("idm.block{i}"), spec, &mut r))
                    .collect::<clam_neural::Result<_>>()?,
                head: Linear::new(&mut store, "idm.head", spec.model_dim, cfg.latent_dim, &mut r)?,
            },
        };
        let mut r = rng::labelled(seed, "fdm-init");
        let fdm = match &cfg.trunk {
            Trunk::Mlp { hidden_dims } => FdmNet::Mlp(Mlp::new(&mut store, "fdm", fdm_mlp_spec(&meta, hidden_dims), &mut r)?),
            Trunk::Transformer(spec) => FdmNet::Transformer {
                embed: Embed::new(&mut store, "fdm", obs_dim, spec, &mut r)?,
                latent_proj: Linear::new(&mut store, "fdm.latent", cfg.latent_dim, spec.model_dim, &mut r)?,
                blocks: (0..spec.n_layers)
                    .map(|i| DecoderBlock::new(&mut store, &format!("fdm.block{i}"), spec, &mut r))
                    .collect::<clam_neural::Result<_>>()?,
                head: Linear::new(&mut store, "fdm.head", spec.model_dim, obs_dim, &mut r)?,
            },
        };
        let mut r = rng::labelled(seed, "decoder-init");
        let decoder = Mlp::new(&mut store, "decoder", decoder_spec(&meta), &mut r)?;
        let last = decoder.layers.last().unwrap().clone();
        for id in [last.weight, last.bias] {
            let shape = store.value(id).shape().to_vec();
            store.set_value(id, Tensor::zeros(shape))?;
        }
        let codebook = match cfg.latent_mode {
            LatentMode::Continuous => None,
            LatentMode::Vq { codebook_size, .. } => {
                let mut r = rng::labelled(seed, "codebook-init");
                let bound = 1.0 / codebook_size as f64;
                Some(store.insert("codebook", init::uniform(&mut r, &[codebook_size, cfg.latent_dim], bound))?)
            }
        };
        Ok(LamModel {
            meta,
            store,
            idm,
            fdm,
            decoder,
            codebook,
        })
    }

    fn bind(meta: LamMeta, store: ParamStore) -> Result<Self> {
        meta.config.validate()?;
        let cfg = &meta.config;
        let idm = match &cfg.trunk {
            Trunk::Mlp { hidden_dims } => IdmNet::Mlp(Mlp::bind(&store, "idm", idm_mlp_spec(&meta, hidden_dims))?),
            Trunk::Transformer(spec) => IdmNet::Transformer {
                embed: Embed::bind(&store, "idm")?,
                blocks: (0..spec.n_layers)
                    .map(|i| EncoderBlock::bind(&store, &format!("idm.block{i}"), spec))
                    .collect::<clam_neural::Result<_>>()?,
                head: Linear::bind(&store, "idm.head")?,
            },
        };
        let fdm = match &cfg.trunk {
            Trunk::Mlp { hidden_dims } => FdmNet::Mlp(Mlp::bind(&store, "fdm", fdm_mlp_spec(&meta, hidden_dims))?),
            Trunk::Transformer(spec) => FdmNet::Transformer {
                embed: Embed::bind(&store, "fdm")?,
                latent_proj: Linear::bind(&store, "fdm.latent")?,
                blocks: (0..spec.n_layers)
                    .map(|i| DecoderBlock::bind(&store, &format!("fdm.block{i}"), spec))
                    .collect::<clam_neural::Result<_>>()?,
                head: Linear::bind(&store, "fdm.head")?,
            },
        };
        let decoder = Mlp::bind(&store, "decoder", decoder_spec(&meta))?;
        let codebook = match cfg.latent_mode {
            LatentMode::Continuous => None,
            LatentMode::Vq { codebook_size, .. } => {
                let id = store.id("codebook")?;
                if store.value(id).shape() != [codebook_size, cfg.latent_dim] {
                    return Err(CoreError::Config("codebook shape disagrees with config".into()));
                }
                Some(id)
            }
        };
        Ok(LamModel {
            meta,
            store,
            idm,
            fdm,
            decoder,
            codebook,
        })
    }

    pub fn config(&self) -> &LamConfig {
        &self.meta.config
    }

    pub fn meta(&self) -> &LamMeta {
        &self.meta
    }

    pub fn obs_dim(&self) -> usize {
        self.meta.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.meta.action_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.meta.config.latent_dim
    }

    pub fn env_hash(&self) -> u64 {
        self.meta.env_hash
    }

    pub fn is_vq(&self) -> bool {
        self.codebook.is_some()
    }

    pub fn idm_param_ids(&self) -> Vec<ParamId> {
        self.store.ids_with_prefix("idm.")
    }

    pub fn fdm_param_ids(&self) -> Vec<ParamId> {
        self.store.ids_with_prefix("fdm.")
    }

    pub fn decoder_param_ids(&self) -> Vec<ParamId> {
        self.store.ids_with_prefix("decoder.")
    }

    pub fn codebook_id(&self) -> Option<ParamId> {
        self.codebook
    }

    /// First-layer weight of an MLP IDM (`window_len·obs_dim × hidden`).
    pub fn idm_input_weight(&self) -> Option<&Tensor> {
        match &self.idm {
            IdmNet::Mlp(m) => Some(self.store.value(m.layers[0].weight)),
            IdmNet::Transformer { .. } => None,
        }
    }

    fn check_seq(&self, tape: &Tape, x: Var, what: &'static str, len: usize) -> Result<usize> {
        let s = tape.shape(x);
        if s.len() != 3 || s[1] != len || s[2] != self.meta.obs_dim {
            return Err(CoreError::Dim {
                what,
                expected: len * self.meta.obs_dim,
                found: s.iter().skip(1).product(),
            });
        }
        Ok(s[0])
    }

    /// `window` is `[B, H + 2, obs_dim]`; returns pre-quantization `z`, `[B, latent_dim]`.
    pub fn idm_forward(&self, tape: &mut Tape, window: Var) -> Result<Var> {
        let w = self.meta.config.window_len();
        let b = self.check_seq(tape, window, "idm window", w)?;
        match &self.idm {
            IdmNet::Mlp(mlp) => {
                let flat = tape.reshape(window, &[b, w * self.meta.obs_dim])?;
                Ok(mlp.forward(tape, &self.store, flat)?)
            }
            IdmNet::Transformer { embed, blocks, head } => {
                let mut h = embed.forward(tape, &self.store, window)?;
                for block in blocks {
                    h = block.forward(tape, &self.store, h, None)?;
                }
                // one latent per position; training consumes the last
                let z_all = head.forward(tape, &self.store, h)?;
                let z = tape.slice(z_all, 1, w - 1, 1)?;
                Ok(tape.reshape(z, &[b, self.meta.config.latent_dim])?)
            }
        }
    }

    /// `context` is `[B, H + 1, obs_dim]`, `z` `[B, latent_dim]`; returns `ô_{t+1}`.
    pub fn fdm_forward(&self, tape: &mut Tape, context: Var, z: Var) -> Result<Var> {
        let c = self.meta.config.context + 1;
        let b = self.check_seq(tape, context, "fdm context", c)?;
        let l = self.meta.config.latent_dim;
        if tape.shape(z) != [b, l] {
            return Err(CoreError::Dim {
                what: "fdm latent",
                expected: l,
                found: *tape.shape(z).last().unwrap_or(&0),
            });
        }
        match &self.fdm {
            FdmNet::Mlp(mlp) => {
                let flat = tape.reshape(context, &[b, c * self.meta.obs_dim])?;
                let x = tape.concat(&[flat, z], 1)?;
                Ok(mlp.forward(tape, &self.store, x)?)
            }
            FdmNet::Transformer {
                embed,
                latent_proj,
                blocks,
                head,
            } => {
                let mut h = embed.forward(tape, &self.store, context)?;
                let zt = tape.reshape(z, &[b, 1, l])?;
                let zt = latent_proj.forward(tape, &self.store, zt)?;
                for block in blocks {
                    h = block.forward(tape, &self.store, h, Some(zt), None)?;
                }
                let last = tape.slice(h, 1, c - 1, 1)?;
                let out = head.forward(tape, &self.store, last)?;
                Ok(tape.reshape(out, &[b, self.meta.obs_dim])?)
            }
        }
    }

    /// `[B, latent_dim] -> [B, action_dim]` in `(-1, 1)`.
    pub fn action_decode(&self, tape: &mut Tape, z: Var) -> Result<Var> {
        let found = *tape.shape(z).last().unwrap_or(&0);
        if tape.shape(z).len() != 2 || found != self.latent_dim() {
            return Err(CoreError::Dim {
                what: "decoder input",
                expected: self.latent_dim(),
                found,
            });
        }
        Ok(self.decoder.forward(tape, &self.store, z)?)
    }

    pub fn quantize(&self, tape: &mut Tape, z: Var) -> Result<VqOutput> {
        let (id, commitment) = match (self.codebook, &self.meta.config.latent_mode) {
            (Some(id), LatentMode::Vq { commitment, .. }) => (id, *commitment),
            _ => return Err(CoreError::NotVq),
        };
        let cb = tape.param(&self.store, id);
        vq_quantize(tape, cb, z, commitment as f32)
    }

    /// Splits `[B, H + 2, d]` windows into context `[B, H + 1, d]` and target `[B, d]`.
    pub fn split_window(&self, tape: &mut Tape, window: Var) -> Result<(Var, Var)> {
        let h1 = self.meta.config.context + 1;
        let b = tape.shape(window)[0];
        let context = tape.slice(window, 1, 0, h1)?;
        let target = tape.slice(window, 1, h1, 1)?;
        let target = tape.reshape(target, &[b, self.meta.obs_dim])?;
        Ok((context, target))
    }

    fn batched(&self, x: &Tensor, rows: usize) -> Result<(Tensor, bool)> {
        let d = self.meta.obs_dim;
        match x.shape() {
            [r, c] if *r == rows && *c == d => Ok((x.clone().reshape([1, rows, d])?, true)),
            [_, r, c] if *r == rows && *c == d => Ok((x.clone(), false)),
            _ => Err(CoreError::Dim {
                what: "observation window",
                expected: rows * d,
                found: x.shape().iter().rev().take(2).product(),
            }),
        }
    }

    fn unbatch(t: Tensor, single: bool) -> Tensor {
        if single {
            let n = t.numel();
            t.reshape([n]).expect("single row")
        } else {
            t
        }
    }

    /// Raw IDM latents for `[H + 2, d]` or `[B, H + 2, d]` windows.
    pub fn encode(&self, windows: &Tensor) -> Result<Tensor> {
        let (x, single) = self.batched(windows, self.meta.config.window_len())?;
        let mut tape = Tape::new();
        let w = tape.constant(x);
        let z = self.idm_forward(&mut tape, w)?;
        Ok(Self::unbatch(tape.value(z).clone(), single))
    }

    /// IDM latents as used downstream: snapped to codebook rows in VQ mode.
    pub fn latents(&self, windows: &Tensor) -> Result<Tensor> {
        let z = self.encode(windows)?;
        self.snap(&z)
    }

    /// Nearest codebook rows in VQ mode, identity otherwise.
    pub fn snap(&self, z: &Tensor) -> Result<Tensor> {
        let Some(id) = self.codebook else {
            return Ok(z.clone());
        };
        let l = self.latent_dim();
        let cb = self.store.value(id).data();
        let mut out = Vec::with_capacity(z.numel());
        for row in z.data().chunks(l) {
            let k = nearest_code(cb, l, row)?;
            out.extend_from_slice(&cb[k * l..(k + 1) * l]);
        }
        Ok(Tensor::new(z.shape().to_vec(), out)?)
    }

    /// `ô_{t+1}` for `[H + 1, d]` / `[B, H + 1, d]` contexts and matching latents.
    pub fn predict_next(&self, context: &Tensor, z: &Tensor) -> Result<Tensor> {
        let (x, single) = self.batched(context, self.meta.config.context + 1)?;
        let b = x.shape()[0];
        let z = z.clone().reshape([b, z.numel() / b.max(1)])?;
        let mut tape = Tape::new();
        let c = tape.constant(x);
        let zv = tape.constant(z);
        let out = self.fdm_forward(&mut tape, c, zv)?;
        Ok(Self::unbatch(tape.value(out).clone(), single))
    }

    /// Decoded actions for `[latent_dim]` or `[B, latent_dim]` latents.
    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        let single = z.rank() == 1;
        let l = self.latent_dim();
        if z.last_dim() != l {
            return Err(CoreError::Dim {
                what: "decoder input",
                expected: l,
                found: z.last_dim(),
            });
        }
        let b = z.numel() / l;
        let mut tape = Tape::new();
        let zv = tape.constant(z.clone().reshape([b, l])?);
        let a = self.action_decode(&mut tape, zv)?;
        Ok(Self::unbatch(tape.value(a).clone(), single))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let spec = serde_json::to_string(&self.meta).expect("meta serializes");
        write_checkpoint(path, &spec, &self.store)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (spec, store) = read_checkpoint(path)?;
        let meta: LamMeta = serde_json::from_str(&spec)
            .map_err(|e| CoreError::Config(format!("checkpoint is not a latent action model: {e}")))?;
        Self::bind(meta, store)
    }
}
