//! Transformer encoder in which a set of query vectors cross-attends over an
//! ordered key/value sequence.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::{Result, SsgError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionalEmbedding {
    /// Fixed sinusoidal table over key/value positions.
    Sinusoidal,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ffn_dim: usize,
    pub dropout: f64,
    pub positional: PositionalEmbedding,
}

impl EncoderConfig {
    pub fn new(dim: usize) -> Self {
        EncoderConfig {
            dim,
            heads: 4,
            layers: 4,
            ffn_dim: 4 * dim,
            dropout: 0.1,
            positional: PositionalEmbedding::Sinusoidal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || self.layers == 0 || self.ffn_dim == 0 {
            return Err(SsgError::Config("encoder sizes must be positive".into()));
        }
        if self.dim % self.heads != 0 {
            return Err(SsgError::Config(format!(
                "dim {} not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(SsgError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// `pe[pos, 2i] = sin(pos / 10000^(2i/d))`, `pe[pos, 2i+1] = cos(...)`.
pub fn sinusoidal_table(len: usize, dim: usize) -> Matrix {
    Matrix::from_fn(len, dim, |pos, j| {
        let i = (j / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * i / dim as f64);
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        Linear {
            w: store.add_xavier(format!("{name}.w"), inputs, outputs, rng),
            b: store.add_constant(format!("{name}.b"), 1, outputs, 0.0),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let y = tape.matmul(x, w);
        tape.add_row(y, b)
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerNormParams {
    gamma: ParamId,
    beta: ParamId,
}

impl LayerNormParams {
    fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        LayerNormParams {
            gamma: store.add_constant(format!("{name}.gamma"), 1, dim, 1.0),
            beta: store.add_constant(format!("{name}.beta"), 1, dim, 0.0),
        }
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let g = tape.param(store, self.gamma);
        let b = tape.param(store, self.beta);
        tape.layer_norm(x, g, b)
    }
}

#[derive(Debug, Clone)]
struct Layer {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    norm1: LayerNormParams,
    ffn_in: Linear,
    ffn_out: Linear,
    norm2: LayerNormParams,
}

/// Attention weights recorded during a forward pass, per layer and head.
#[derive(Debug, Clone, Default)]
pub struct AttentionTrace {
    pub weights: Vec<Vec<Matrix>>,
}

/// Stochastic state of a training forward pass.
pub struct Dropout<'a, R: Rng> {
    pub rate: f64,
    pub rng: &'a mut R,
}

fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut impl Rng) -> Matrix {
    let keep = 1.0 / (1.0 - rate);
    Matrix::from_fn(rows, cols, |_, _| if rng.gen_bool(rate) { 0.0 } else { keep })
}

#[derive(Debug, Clone)]
pub struct CrossAttentionEncoder {
    cfg: EncoderConfig,
    layers: Vec<Layer>,
}

impl CrossAttentionEncoder {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &EncoderConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        let layers = (0..cfg.layers)
            .map(|l| {
                let p = format!("{name}.layer{l}");
                Layer {
                    q: Linear::new(store, &format!("{p}.q"), d, d, rng),
                    k: Linear::new(store, &format!("{p}.k"), d, d, rng),
                    v: Linear::new(store, &format!("{p}.v"), d, d, rng),
                    out: Linear::new(store, &format!("{p}.out"), d, d, rng),
                    norm1: LayerNormParams::new(store, &format!("{p}.norm1"), d),
                    ffn_in: Linear::new(store, &format!("{p}.ffn_in"), d, cfg.ffn_dim, rng),
                    ffn_out: Linear::new(store, &format!("{p}.ffn_out"), cfg.ffn_dim, d, rng),
                    norm2: LayerNormParams::new(store, &format!("{p}.norm2"), d),
                }
            })
            .collect();
        Ok(CrossAttentionEncoder { cfg: cfg.clone(), layers })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    /// Runs `queries` (`n_q × dim`) against `kv` (`n_kv × dim`).
    ///
    /// `kv_mask[i] == false` hides key/value position `i` from attention.
    /// Positional embeddings are added to keys and values only.
    pub fn forward<R: Rng>(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        queries: Var,
        kv: Var,
        kv_mask: Option<&[bool]>,
        mut dropout: Option<&mut Dropout<'_, R>>,
        mut trace: Option<&mut AttentionTrace>,
    ) -> Result<Var> {
        let d = self.cfg.dim;
        let (nq, qd) = tape.value(queries).shape();
        let (nkv, kd) = tape.value(kv).shape();
        if qd != d {
            return Err(SsgError::DimensionMismatch { expected: d, actual: qd });
        }
        if kd != d {
            return Err(SsgError::DimensionMismatch { expected: d, actual: kd });
        }
        if nkv == 0 {
            return Err(SsgError::Config("empty key/value sequence".into()));
        }
        let mask_leaf = match kv_mask {
            Some(mask) => {
                if mask.len() != nkv {
                    return Err(SsgError::DimensionMismatch {
                        expected: nkv,
                        actual: mask.len(),
                    });
                }
                if !mask.iter().any(|&m| m) {
                    return Err(SsgError::Config("every key/value position is masked".into()));
                }
                if mask.iter().all(|&m| m) {
                    None
                } else {
                    let m = Matrix::from_fn(nq, nkv, |_, j| if mask[j] { 0.0 } else { f64::NEG_INFINITY });
                    Some(tape.leaf(m))
                }
            }
            None => None,
        };
        let memory = match self.cfg.positional {
            PositionalEmbedding::Sinusoidal => {
                let pe = tape.leaf(sinusoidal_table(nkv, d));
                tape.add(kv, pe)
            }
            PositionalEmbedding::None => kv,
        };

        let heads = self.cfg.heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut x = queries;
        for layer in &self.layers {
            let q = layer.q.forward(tape, store, x);
            let k = layer.k.forward(tape, store, memory);
            let v = layer.v.forward(tape, store, memory);
            let mut head_outputs = Vec::with_capacity(heads);
            let mut layer_weights = Vec::new();
            for h in 0..heads {
                let qh = tape.slice_cols(q, h * dh, dh);
                let kh = tape.slice_cols(k, h * dh, dh);
                let vh = tape.slice_cols(v, h * dh, dh);
                let s = tape.matmul_t(qh, kh);
                let mut s = tape.scale(s, scale);
                if let Some(m) = mask_leaf {
                    s = tape.add(s, m);
                }
                let a = tape.softmax(s);
                if trace.is_some() {
                    layer_weights.push(tape.value(a).clone());
                }
                head_outputs.push(tape.matmul(a, vh));
            }
            if let Some(t) = trace.as_deref_mut() {
                t.weights.push(layer_weights);
            }
            let attn = if heads == 1 { head_outputs[0] } else { tape.concat_cols(&head_outputs) };
            let mut attn = layer.out.forward(tape, store, attn);
            if let Some(dr) = dropout.as_deref_mut() {
                if dr.rate > 0.0 {
                    attn = tape.mul_const(attn, dropout_mask(nq, d, dr.rate, dr.rng));
                }
            }
            let res = tape.add(x, attn);
            x = layer.norm1.forward(tape, store, res);

            let hidden = layer.ffn_in.forward(tape, store, x);
            let hidden = tape.gelu(hidden);
            let mut ff = layer.ffn_out.forward(tape, store, hidden);
            if let Some(dr) = dropout.as_deref_mut() {
                if dr.rate > 0.0 {
                    ff = tape.mul_const(ff, dropout_mask(nq, d, dr.rate, dr.rng));
                }
            }
            let res = tape.add(x, ff);
            x = layer.norm2.forward(tape, store, res);
        }
        Ok(x)
    }
}
