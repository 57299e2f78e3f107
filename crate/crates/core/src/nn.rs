//! Transformer building blocks recorded on a [`Tape`].

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Result, SggError};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionConfig {
    pub model_dim: usize,
    pub heads: usize,
    pub layers: usize,
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.model_dim % self.heads != 0 {
            return Err(SggError::Config(format!(
                "model_dim {} is not divisible by heads {}",
                self.model_dim, self.heads
            )));
        }
        if self.layers == 0 {
            return Err(SggError::Config("layers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let weight = store.add_uniform(format!("{name}.weight"), output, input, input, rng)?;
        let bias = if bias {
            Some(store.add_uniform(format!("{name}.bias"), 1, output, input, rng)?)
        } else {
            None
        };
        Ok(Linear { weight, bias })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let w = tape.param(store, self.weight);
        let y = tape.matmul_t(x, w);
        match self.bias {
            Some(b) => {
                let b = tape.param(store, b);
                tape.add_row(y, b)
            }
            None => y,
        }
    }
}

/// Learned per-feature gain and bias applied after row normalization.
#[derive(Clone, Copy, Debug)]
pub struct Norm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl Norm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(Norm {
            gain: store.add(format!("{name}.gain"), Tensor2::filled(1, dim, 1.0))?,
            bias: store.add(format!("{name}.bias"), Tensor2::zeros(1, dim))?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let n = tape.layer_norm(x);
        let g = tape.param(store, self.gain);
        let b = tape.param(store, self.bias);
        let scaled = tape.mul_row(n, g);
        tape.add_row(scaled, b)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub dim: usize,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(SggError::Config(format!(
                "{name}: dimension {dim} not divisible by {heads} heads"
            )));
        }
        Ok(MultiHeadAttention {
            q: Linear::new(store, &format!("{name}.q"), dim, dim, true, rng)?,
            k: Linear::new(store, &format!("{name}.k"), dim, dim, true, rng)?,
            v: Linear::new(store, &format!("{name}.v"), dim, dim, true, rng)?,
            out: Linear::new(store, &format!("{name}.o"), dim, dim, true, rng)?,
            dim,
            heads,
        })
    }

    /// Scaled dot-product attention per head with `1/sqrt(dim/heads)`
    /// scaling; heads are concatenated and passed through the output map.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        query: Var,
        key: Var,
        value: Var,
    ) -> Result<Var> {
        let keys = tape.value(key).rows();
        if keys == 0 {
            return Err(SggError::EmptyKeys);
        }
        for (what, v) in [("query", query), ("key", key), ("value", value)] {
            if tape.value(v).cols() != self.dim {
                return Err(SggError::dim(
                    "multi_head_attention",
                    format!("{what} has {} columns, expected {}", tape.value(v).cols(), self.dim),
                ));
            }
        }
        if tape.value(value).rows() != keys {
            return Err(SggError::dim(
                "multi_head_attention",
                "key and value row counts differ",
            ));
        }
        let q = self.q.forward(tape, store, query);
        let k = self.k.forward(tape, store, key);
        let v = self.v.forward(tape, store, value);
        let hd = self.dim / self.heads;
        let scale = 1.0 / (hd as f64).sqrt();
        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (qh, kh, vh) = if self.heads == 1 {
                (q, k, v)
            } else {
                (
                    tape.slice_cols(q, h * hd, hd),
                    tape.slice_cols(k, h * hd, hd),
                    tape.slice_cols(v, h * hd, hd),
                )
            };
            let scores = tape.matmul_t(qh, kh);
            let scores = tape.scale(scores, scale);
            let weights = tape.softmax_rows(scores);
            heads.push(tape.matmul(weights, vh));
        }
        let merged = if heads.len() == 1 {
            heads[0]
        } else {
            tape.concat_cols(&heads)
        };
        Ok(self.out.forward(tape, store, merged))
    }
}

/// Plain evaluation of one attention block.
pub fn multi_head_attention(
    q: &Tensor2,
    k: &Tensor2,
    v: &Tensor2,
    attn: &MultiHeadAttention,
    store: &ParamStore,
    cfg: &AttentionConfig,
) -> Result<Tensor2> {
    cfg.validate()?;
    if cfg.model_dim != attn.dim || cfg.heads != attn.heads {
        return Err(SggError::dim(
            "multi_head_attention",
            format!(
                "config ({}, {} heads) does not match parameters ({}, {} heads)",
                cfg.model_dim, cfg.heads, attn.dim, attn.heads
            ),
        ));
    }
    let mut tape = Tape::new();
    let (qv, kv, vv) = (
        tape.constant(q.clone()),
        tape.constant(k.clone()),
        tape.constant(v.clone()),
    );
    let out = attn.forward(&mut tape, store, qv, kv, vv)?;
    Ok(tape.value(out).clone())
}

#[derive(Clone, Copy, Debug)]
pub struct FeedForward {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl FeedForward {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(FeedForward {
            fc1: Linear::new(store, &format!("{name}.fc1"), dim, hidden, true, rng)?,
            fc2: Linear::new(store, &format!("{name}.fc2"), hidden, dim, true, rng)?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let h = self.fc1.forward(tape, store, x);
        let h = tape.gelu(h);
        self.fc2.forward(tape, store, h)
    }
}

/// Post-norm self-attention encoder layer.
#[derive(Clone, Copy, Debug)]
pub struct EncoderLayer {
    pub attn: MultiHeadAttention,
    pub norm1: Norm,
    pub ff: FeedForward,
    pub norm2: Norm,
}

impl EncoderLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(EncoderLayer {
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), dim, heads, rng)?,
            norm1: Norm::new(store, &format!("{name}.norm1"), dim)?,
            ff: FeedForward::new(store, &format!("{name}.ff"), dim, hidden, rng)?,
            norm2: Norm::new(store, &format!("{name}.norm2"), dim)?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let a = self.attn.forward(tape, store, x, x, x)?;
        let x = tape.add(x, a);
        let x = self.norm1.forward(tape, store, x);
        let f = self.ff.forward(tape, store, x);
        let x = tape.add(x, f);
        Ok(self.norm2.forward(tape, store, x))
    }
}

/// Post-norm decoder layer: self-attention among queries, cross-attention to
/// a memory, feed-forward. The position component is added to the attention
/// queries (and self-attention keys) of every layer.
#[derive(Clone, Copy, Debug)]
pub struct DecoderLayer {
    pub self_attn: MultiHeadAttention,
    pub norm1: Norm,
    pub cross_attn: MultiHeadAttention,
    pub norm2: Norm,
    pub ff: FeedForward,
    pub norm3: Norm,
}

impl DecoderLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(DecoderLayer {
            self_attn: MultiHeadAttention::new(store, &format!("{name}.self_attn"), dim, heads, rng)?,
            norm1: Norm::new(store, &format!("{name}.norm1"), dim)?,
            cross_attn: MultiHeadAttention::new(
                store,
                &format!("{name}.cross_attn"),
                dim,
                heads,
                rng,
            )?,
            norm2: Norm::new(store, &format!("{name}.norm2"), dim)?,
            ff: FeedForward::new(store, &format!("{name}.ff"), dim, hidden, rng)?,
            norm3: Norm::new(store, &format!("{name}.norm3"), dim)?,
        })
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        content: Var,
        position: Var,
        memory: Var,
    ) -> Result<Var> {
        let q = tape.add(content, position);
        let a = self.self_attn.forward(tape, store, q, q, q)?;
        let x = tape.add(content, a);
        let x = self.norm1.forward(tape, store, x);

        let q = tape.add(x, position);
        let c = self.cross_attn.forward(tape, store, q, memory, memory)?;
        let x = tape.add(x, c);
        let x = self.norm2.forward(tape, store, x);

        let f = self.ff.forward(tape, store, x);
        let x = tape.add(x, f);
        Ok(self.norm3.forward(tape, store, x))
    }
}

/// Stack of linear layers with GELU between them.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dims: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], true, rng))
            .collect::<Result<_>>()?;
        Ok(Mlp { layers })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let mut h = x;
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(tape, store, h);
            if i + 1 < self.layers.len() {
                h = tape.gelu(h);
            }
        }
        h
    }
}
