//! Tiny causal byte-level transformer.
//!
//! The same struct serves as the trainable student and, cloned with every
//! parameter frozen, as the teacher. Pre-norm blocks, learned positions,
//! GELU MLP, no dropout, no biases on the projections. Optionally each
//! attention/MLP projection carries a low-rank adapter (frozen base plus
//! trainable `down @ up` branch, zero-initialized so attaching is a no-op).

pub mod checkpoint;
pub mod forward;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{MftError, Result};
use crate::numerics::params::{ParamId, ParamStore};
use crate::numerics::rng::{stream_rng, streams};
use crate::numerics::tensor::Tensor;

const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TinyLMConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub seq_len: usize,
    pub tie_embeddings: bool,
}

impl Default for TinyLMConfig {
    fn default() -> Self {
        TinyLMConfig {
            vocab_size: crate::data::VOCAB_SIZE,
            d_model: 128,
            n_layers: 2,
            n_heads: 4,
            d_ff: 256,
            seq_len: 256,
            tie_embeddings: true,
        }
    }
}

impl TinyLMConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0
            || self.d_model == 0
            || self.n_layers == 0
            || self.n_heads == 0
            || self.d_ff == 0
            || self.seq_len == 0
        {
            return Err(MftError::config("model config: zero-sized dimension"));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(MftError::config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }
}

/// Which projection matrices receive a low-rank adapter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetMatrix {
    Q,
    K,
    V,
    O,
    MlpUp,
    MlpDown,
}

impl TargetMatrix {
    pub const ALL: [TargetMatrix; 6] = [
        TargetMatrix::Q,
        TargetMatrix::K,
        TargetMatrix::V,
        TargetMatrix::O,
        TargetMatrix::MlpUp,
        TargetMatrix::MlpDown,
    ];
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AdapterConfig {
    pub rank: usize,
    /// Scaling numerator; the adapter branch is weighted `alpha_adapter / rank`.
    pub alpha_adapter: f64,
    pub target_matrices: Vec<TargetMatrix>,
}

impl AdapterConfig {
    /// Adapter of the given rank on every attention and MLP projection,
    /// with the conventional `alpha = rank` scaling.
    pub fn all_projections(rank: usize) -> Self {
        AdapterConfig {
            rank,
            alpha_adapter: rank as f64,
            target_matrices: TargetMatrix::ALL.to_vec(),
        }
    }

    pub fn scale(&self) -> f32 {
        (self.alpha_adapter / self.rank as f64) as f32
    }
}

/// Adapter pair for one projection: `down` is [in, r], `up` is [r, out].
#[derive(Clone, Copy, Debug)]
pub struct AdapterPair {
    pub down: ParamId,
    pub up: ParamId,
}

#[derive(Clone, Debug, Default)]
pub struct LayerAdapters {
    pub q: Option<AdapterPair>,
    pub k: Option<AdapterPair>,
    pub v: Option<AdapterPair>,
    pub o: Option<AdapterPair>,
    pub up: Option<AdapterPair>,
    pub down: Option<AdapterPair>,
}

#[derive(Clone, Debug)]
pub struct LayerParams {
    pub ln1_gain: ParamId,
    pub ln1_bias: ParamId,
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub ln2_gain: ParamId,
    pub ln2_bias: ParamId,
    pub w_up: ParamId,
    pub w_down: ParamId,
}

/// Everything about the model except the parameter values: config, parameter
/// ids in forward order, and the attached adapter layout (if any). Split from
/// the store so gradient checking can perturb parameters while the spec stays
/// borrowed.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub cfg: TinyLMConfig,
    pub tok_emb: ParamId,
    pub pos_emb: ParamId,
    pub layers: Vec<LayerParams>,
    pub final_gain: ParamId,
    pub final_bias: ParamId,
    /// Separate output head when embeddings are untied.
    pub head: Option<ParamId>,
    pub adapter: Option<(AdapterConfig, Vec<LayerAdapters>)>,
}

pub struct TinyLM {
    spec: ModelSpec,
    params: ParamStore,
}

impl TinyLM {
    /// Deterministic initialization: projection and embedding weights are
    /// normal with std 0.02, norm gains one, norm offsets zero. The same seed
    /// yields bit-identical parameters.
    pub fn init(cfg: TinyLMConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream_rng(seed, streams::INIT);
        let normal = Normal::new(0.0, INIT_STD).map_err(|e| MftError::config(e.to_string()))?;
        let mut params = ParamStore::new();
        let randn = |shape: &[usize], rng: &mut rand_chacha::ChaCha8Rng| {
            let n: usize = shape.iter().product();
            let data: Vec<f32> = (0..n).map(|_| normal.sample(rng) as f32).collect();
            Tensor::from_vec_unchecked(shape, data)
        };

        let tok_emb = params.register("tok_emb", randn(&[cfg.vocab_size, cfg.d_model], &mut rng), true);
        let pos_emb = params.register("pos_emb", randn(&[cfg.seq_len, cfg.d_model], &mut rng), true);
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for i in 0..cfg.n_layers {
            let d = cfg.d_model;
            layers.push(LayerParams {
                ln1_gain: params.register(format!("layer{i}.ln1.gain"), ones(d), true),
                ln1_bias: params.register(format!("layer{i}.ln1.bias"), Tensor::zeros(&[d]), true),
                wq: params.register(format!("layer{i}.attn.wq"), randn(&[d, d], &mut rng), true),
                wk: params.register(format!("layer{i}.attn.wk"), randn(&[d, d], &mut rng), true),
                wv: params.register(format!("layer{i}.attn.wv"), randn(&[d, d], &mut rng), true),
                wo: params.register(format!("layer{i}.attn.wo"), randn(&[d, d], &mut rng), true),
                ln2_gain: params.register(format!("layer{i}.ln2.gain"), ones(d), true),
                ln2_bias: params.register(format!("layer{i}.ln2.bias"), Tensor::zeros(&[d]), true),
                w_up: params.register(format!("layer{i}.mlp.up"), randn(&[d, cfg.d_ff], &mut rng), true),
                w_down: params.register(format!("layer{i}.mlp.down"), randn(&[cfg.d_ff, d], &mut rng), true),
            });
        }
        let final_gain = params.register("final.gain", ones(cfg.d_model), true);
        let final_bias = params.register("final.bias", Tensor::zeros(&[cfg.d_model]), true);
        let head = if cfg.tie_embeddings {
            None
        } else {
            Some(params.register("head", randn(&[cfg.d_model, cfg.vocab_size], &mut rng), true))
        };

        let spec = ModelSpec {
            cfg,
            tok_emb,
            pos_emb,
            layers,
            final_gain,
            final_bias,
            head,
            adapter: None,
        };
        Ok(TinyLM { spec, params })
    }

    pub fn config(&self) -> &TinyLMConfig {
        &self.spec.cfg
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Disjoint borrows for gradient checking and training steps.
    pub fn parts_mut(&mut self) -> (&ModelSpec, &mut ParamStore) {
        (&self.spec, &mut self.params)
    }

    /// Next-token logits [batch, seq, vocab] without recording a tape.
    pub fn forward(&self, tokens: &[u32], batch: usize, seq: usize) -> Result<Tensor> {
        forward::logits(&self.spec, &self.params, tokens, batch, seq)
    }

    /// Deep copy with every parameter frozen: the self-distillation teacher.
    /// It registers no trainable parameters and is only ever run through the
    /// tape-free forward pass.
    pub fn clone_frozen(&self) -> TinyLM {
        let mut params = self.params.clone();
        params.freeze_all();
        TinyLM { spec: self.spec.clone(), params }
    }

    /// Replaces each targeted projection `W` by `W_frozen + (alpha/r) * down @ up`
    /// with `down` scaled-normal, `up` zero. Only adapter parameters remain
    /// trainable, so the forward output is bit-identical to the base model
    /// until training moves `up` off zero.
    pub fn attach_adapter(&mut self, acfg: &AdapterConfig, seed: u64) -> Result<()> {
        if self.spec.adapter.is_some() {
            return Err(MftError::config("adapter already attached"));
        }
        if acfg.rank == 0 {
            return Err(MftError::config("adapter rank must be >= 1"));
        }
        if acfg.target_matrices.is_empty() {
            return Err(MftError::config("adapter has no target matrices"));
        }
        let d = self.spec.cfg.d_model;
        let ff = self.spec.cfg.d_ff;
        for t in &acfg.target_matrices {
            let min_dim = match t {
                TargetMatrix::MlpUp | TargetMatrix::MlpDown => d.min(ff),
                _ => d,
            };
            if acfg.rank > min_dim {
                return Err(MftError::config(format!(
                    "adapter rank {} exceeds min dimension {min_dim} of target {t:?}",
                    acfg.rank
                )));
            }
        }

        self.params.freeze_all();
        let mut rng = stream_rng(seed, streams::INIT);
        let normal = Normal::new(0.0, INIT_STD).map_err(|e| MftError::config(e.to_string()))?;
        let pairs_for = |name: String, d_in: usize, d_out: usize, params: &mut ParamStore, rng: &mut rand_chacha::ChaCha8Rng| {
            let down_data: Vec<f32> = (0..d_in * acfg.rank).map(|_| normal.sample(rng) as f32).collect();
            let down = params.register(
                format!("{name}.lora_down"),
                Tensor::from_vec_unchecked(&[d_in, acfg.rank], down_data),
                true,
            );
            let up = params.register(format!("{name}.lora_up"), Tensor::zeros(&[acfg.rank, d_out]), true);
            AdapterPair { down, up }
        };

        let mut layers = Vec::with_capacity(self.spec.layers.len());
        for i in 0..self.spec.layers.len() {
            let mut la = LayerAdapters::default();
            for t in &acfg.target_matrices {
                let (slot, name, d_in, d_out) = match t {
                    TargetMatrix::Q => (&mut la.q, format!("layer{i}.attn.wq"), d, d),
                    TargetMatrix::K => (&mut la.k, format!("layer{i}.attn.wk"), d, d),
                    TargetMatrix::V => (&mut la.v, format!("layer{i}.attn.wv"), d, d),
                    TargetMatrix::O => (&mut la.o, format!("layer{i}.attn.wo"), d, d),
                    TargetMatrix::MlpUp => (&mut la.up, format!("layer{i}.mlp.up"), d, ff),
                    TargetMatrix::MlpDown => (&mut la.down, format!("layer{i}.mlp.down"), ff, d),
                };
                *slot = Some(pairs_for(name, d_in, d_out, &mut self.params, &mut rng));
            }
            layers.push(la);
        }
        self.spec.adapter = Some((acfg.clone(), layers));
        Ok(())
    }

    /// (total parameter count, trainable parameter count)
    pub fn count_params(&self) -> (usize, usize) {
        self.params.count_params()
    }
}

fn ones(n: usize) -> Tensor {
    Tensor::from_vec_unchecked(&[n], vec![1.0; n])
}
