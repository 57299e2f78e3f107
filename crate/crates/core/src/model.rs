//! The cascaded set-prediction model: image encoder, subject-object decoder,
//! predicate decoder over the bank (or image) memory, triplet formation,
//! temporal aggregation and prediction heads.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::bank::BankParams;
use crate::error::{Result, SggError};
use crate::geometry::BoundingBox;
use crate::nn::{AttentionConfig, DecoderLayer, EncoderLayer, FeedForward, Linear, Mlp, MultiHeadAttention};
use crate::params::{ParamId, ParamStore};
use crate::query::{AnchorWeights, CueEmbeddings, QueryBlock};
use crate::tensor::{sinusoidal_pe, softmax_rows, Tensor2};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Query count `N`.
    pub queries: usize,
    pub model_dim: usize,
    /// Cue embedding width `d_l`.
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub n_ref: usize,
    pub object_classes: usize,
    pub predicate_groups: [usize; 3],
    /// Channels per frame-feature token.
    pub feature_channels: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            queries: 8,
            model_dim: 32,
            embed_dim: 16,
            layers: 2,
            heads: 4,
            ff_dim: 64,
            n_ref: 1,
            object_classes: 6,
            predicate_groups: [3, 4, 5],
            feature_channels: 6,
        }
    }
}

impl ModelConfig {
    pub fn attention(&self) -> AttentionConfig {
        AttentionConfig {
            model_dim: self.model_dim,
            heads: self.heads,
            layers: self.layers,
        }
    }

    pub fn predicate_classes(&self) -> usize {
        self.predicate_groups.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        self.attention().validate()?;
        if self.model_dim % 2 != 0 {
            return Err(SggError::Config(format!(
                "model_dim must be even for positional encodings, got {}",
                self.model_dim
            )));
        }
        for (name, v) in [
            ("queries", self.queries),
            ("embed_dim", self.embed_dim),
            ("ff_dim", self.ff_dim),
            ("feature_channels", self.feature_channels),
        ] {
            if v == 0 {
                return Err(SggError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.object_classes < 2 {
            return Err(SggError::Config("object_classes must be at least 2".into()));
        }
        if self.predicate_classes() == 0 {
            return Err(SggError::Config("need at least one predicate class".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContentSource {
    Vlm,
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredicateMemory {
    Bank,
    Image,
}

impl FromStr for ContentSource {
    type Err = SggError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vlm" => Ok(ContentSource::Vlm),
            "zero" => Ok(ContentSource::Zero),
            other => Err(SggError::Config(format!("content source must be vlm or zero, got `{other}`"))),
        }
    }
}

impl fmt::Display for ContentSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContentSource::Vlm => "vlm",
            ContentSource::Zero => "zero",
        })
    }
}

impl FromStr for PredicateMemory {
    type Err = SggError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bank" => Ok(PredicateMemory::Bank),
            "image" => Ok(PredicateMemory::Image),
            other => Err(SggError::Config(format!("predicate memory must be bank or image, got `{other}`"))),
        }
    }
}

impl fmt::Display for PredicateMemory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PredicateMemory::Bank => "bank",
            PredicateMemory::Image => "image",
        })
    }
}

/// The two ablation switches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Switches {
    pub content: ContentSource,
    pub memory: PredicateMemory,
}

impl Default for Switches {
    fn default() -> Self {
        Switches {
            content: ContentSource::Vlm,
            memory: PredicateMemory::Bank,
        }
    }
}

/// Inputs of one frame: feature tokens (`L × channels`) and cue embeddings.
#[derive(Clone, Copy, Debug)]
pub struct FrameInput<'a> {
    pub features: &'a Tensor2,
    pub cues: &'a CueEmbeddings,
}

/// Per-query outputs: boxes, class distributions (last column is no-object)
/// and grouped predicate probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct TripletPredictionSet {
    pub sub_boxes: Vec<BoundingBox>,
    pub obj_boxes: Vec<BoundingBox>,
    pub sub_probs: Tensor2,
    pub obj_probs: Tensor2,
    pub pred_probs: [Tensor2; 3],
}

impl TripletPredictionSet {
    pub fn len(&self) -> usize {
        self.sub_boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sub_boxes.is_empty()
    }

    pub fn predicate_classes(&self) -> usize {
        self.pred_probs.iter().map(Tensor2::cols).sum()
    }

    /// Probability of global predicate id `p` for query `i`.
    pub fn predicate_prob(&self, i: usize, p: usize) -> f64 {
        let mut p = p;
        for g in &self.pred_probs {
            if p < g.cols() {
                return g.get(i, p);
            }
            p -= g.cols();
        }
        panic!("predicate id out of range")
    }

    /// All predicate probabilities of query `i` in global id order.
    pub fn predicate_row(&self, i: usize) -> Vec<f64> {
        self.pred_probs.iter().flat_map(|g| g.row(i).iter().copied()).collect()
    }
}

/// Tape handles of the head outputs for one frame.
#[derive(Clone, Copy, Debug)]
pub struct HeadOutputs {
    pub sub_boxes: Var,
    pub obj_boxes: Var,
    pub sub_logits: Var,
    pub obj_logits: Var,
    /// `N × P` logits, groups concatenated in group order.
    pub pred_logits: Var,
}

#[derive(Clone, Debug)]
pub struct SggModel {
    pub cfg: ModelConfig,
    pub store: ParamStore,
    pub anchors: ParamId,
    pub image_proj: Linear,
    pub image_encoder: Vec<EncoderLayer>,
    pub so_content: Linear,
    pub pred_content: Linear,
    pub bank: BankParams,
    pub so_decoder: Vec<DecoderLayer>,
    pub pred_decoder: Vec<DecoderLayer>,
    pub temporal_attn: MultiHeadAttention,
    pub temporal_ff: FeedForward,
    pub sub_box: Mlp,
    pub obj_box: Mlp,
    pub sub_cls: Linear,
    pub obj_cls: Linear,
    pub pred_heads: [Linear; 3],
}

impl SggModel {
    /// Builds every parameter in a fixed order from one seed. All parameters
    /// exist regardless of the ablation switches.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rng = &mut rng;
        let mut store = ParamStore::new();
        let s = &mut store;
        let (n, d, dl, h, ff) = (cfg.queries, cfg.model_dim, cfg.embed_dim, cfg.heads, cfg.ff_dim);

        let anchors = s.add_bounded("anchors", n, d, 1.0, rng)?;
        let image_proj = Linear::new(s, "image.proj", cfg.feature_channels, d, true, rng)?;
        let image_encoder = (0..cfg.layers)
            .map(|l| EncoderLayer::new(s, &format!("image.enc.{l}"), d, h, ff, rng))
            .collect::<Result<_>>()?;
        let so_content = Linear::new(s, "query.so_content", 2 * dl, d, false, rng)?;
        let pred_content = Linear::new(s, "query.pred_content", dl, d, false, rng)?;
        let bank = BankParams::new(s, dl, d, h, cfg.layers, ff, rng)?;
        let so_decoder = (0..cfg.layers)
            .map(|l| DecoderLayer::new(s, &format!("so_dec.{l}"), d, h, ff, rng))
            .collect::<Result<_>>()?;
        let pred_decoder = (0..cfg.layers)
            .map(|l| DecoderLayer::new(s, &format!("pred_dec.{l}"), d, h, ff, rng))
            .collect::<Result<_>>()?;
        let temporal_attn = MultiHeadAttention::new(s, "temporal.attn", 2 * d, h, rng)?;
        let temporal_ff = FeedForward::new(s, "temporal.ff", 2 * d, 2 * ff, rng)?;
        let sub_box = Mlp::new(s, "head.sub_box", &[d, d, d, 4], rng)?;
        let obj_box = Mlp::new(s, "head.obj_box", &[d, d, d, 4], rng)?;
        let classes = cfg.object_classes + 1;
        let sub_cls = Linear::new(s, "head.sub_cls", d, classes, true, rng)?;
        let obj_cls = Linear::new(s, "head.obj_cls", d, classes, true, rng)?;
        let mut heads = Vec::with_capacity(3);
        for (g, &size) in cfg.predicate_groups.iter().enumerate() {
            heads.push(Linear::new(s, &format!("head.pred.{g}"), d, size, true, rng)?);
        }
        let pred_heads = [heads[0], heads[1], heads[2]];

        Ok(SggModel {
            cfg,
            store,
            anchors,
            image_proj,
            image_encoder,
            so_content,
            pred_content,
            bank,
            so_decoder,
            pred_decoder,
            temporal_attn,
            temporal_ff,
            sub_box,
            obj_box,
            sub_cls,
            obj_cls,
            pred_heads,
        })
    }

    pub fn anchor_weights(&self) -> AnchorWeights {
        AnchorWeights {
            w: self.store.get(self.anchors).value.clone(),
        }
    }

    pub fn set_anchors(&mut self, anchors: &AnchorWeights) -> Result<()> {
        let p = self.store.get_mut(self.anchors);
        if p.value.shape() != anchors.w.shape() {
            return Err(SggError::Compatibility {
                name: "anchors".into(),
                detail: format!("expected shape {:?}, got {:?}", p.value.shape(), anchors.w.shape()),
            });
        }
        p.value = anchors.w.clone();
        Ok(())
    }

    pub fn encode_image_on_tape(&self, tape: &mut Tape, features: &Tensor2) -> Result<Var> {
        let l = features.rows();
        if l == 0 {
            return Err(SggError::EmptyKeys);
        }
        if features.cols() != self.cfg.feature_channels {
            return Err(SggError::dim(
                "encode_image",
                format!(
                    "frame features have {} channels, model expects {}",
                    features.cols(),
                    self.cfg.feature_channels
                ),
            ));
        }
        let x = tape.constant(features.clone());
        let x = self.image_proj.forward(tape, &self.store, x);
        let pe = tape.constant(sinusoidal_pe(l, self.cfg.model_dim)?);
        let mut h = tape.add(x, pe);
        for layer in &self.image_encoder {
            h = layer.forward(tape, &self.store, h)?;
        }
        Ok(h)
    }

    fn decode_on_tape(
        &self,
        tape: &mut Tape,
        layers: &[DecoderLayer],
        content: Var,
        position: Var,
        memory: Var,
    ) -> Result<Var> {
        let mut h = content;
        for layer in layers {
            h = layer.forward(tape, &self.store, h, position, memory)?;
        }
        Ok(h)
    }

    /// Subject-object queries from cues (content) and anchors (position).
    pub fn subject_object_queries_on_tape(&self, tape: &mut Tape, cues: &CueEmbeddings) -> Result<(Var, Var)> {
        let input = tape.constant(cues.subject_object_input(self.cfg.queries)?);
        let content = self.so_content.forward(tape, &self.store, input);
        let position = tape.param(&self.store, self.anchors);
        Ok((content, position))
    }

    /// Predicate content from cue predicate embeddings; position is `so_out`.
    pub fn predicate_queries_on_tape(&self, tape: &mut Tape, cues: &CueEmbeddings) -> Result<Var> {
        let input = tape.constant(cues.predicate_input(self.cfg.queries)?);
        Ok(self.pred_content.forward(tape, &self.store, input))
    }

    /// `N × 2d` triplet rows of one frame, before temporal aggregation.
    pub fn frame_triplets_on_tape(&self, tape: &mut Tape, frame: &FrameInput<'_>, sw: Switches) -> Result<Var> {
        let empty;
        let content_cues = match sw.content {
            ContentSource::Vlm => frame.cues,
            ContentSource::Zero => {
                empty = CueEmbeddings::empty(self.cfg.embed_dim);
                &empty
            }
        };
        let image = self.encode_image_on_tape(tape, frame.features)?;
        let (so_c, so_p) = self.subject_object_queries_on_tape(tape, content_cues)?;
        let so_out = self.decode_on_tape(tape, &self.so_decoder, so_c, so_p, image)?;
        let memory = match sw.memory {
            PredicateMemory::Image => image,
            PredicateMemory::Bank => {
                let tokens = self.bank.assemble_on_tape(tape, &self.store, frame.cues)?;
                self.bank.encode_on_tape(tape, &self.store, tokens)?
            }
        };
        let p_c = self.predicate_queries_on_tape(tape, content_cues)?;
        let p_out = self.decode_on_tape(tape, &self.pred_decoder, p_c, so_out, memory)?;
        Ok(tape.concat_cols(&[so_out, p_out]))
    }

    /// Cross-frame attention from current rows to all reference rows,
    /// followed by a residual feed-forward. Identity without references.
    pub fn temporal_on_tape(&self, tape: &mut Tape, current: Var, refs: &[Var]) -> Result<Var> {
        if refs.is_empty() {
            return Ok(current);
        }
        let shape = tape.value(current).shape();
        for &r in refs {
            if tape.value(r).cols() != shape.1 {
                return Err(SggError::dim(
                    "temporal_aggregate",
                    format!("reference has {} columns, current has {}", tape.value(r).cols(), shape.1),
                ));
            }
        }
        let keys = if refs.len() == 1 { refs[0] } else { tape.concat_rows(refs) };
        let a = self.temporal_attn.forward(tape, &self.store, current, keys, keys)?;
        let f = self.temporal_ff.forward(tape, &self.store, a);
        Ok(tape.add(current, f))
    }

    pub fn heads_on_tape(&self, tape: &mut Tape, triplets: Var) -> Result<HeadOutputs> {
        let d = self.cfg.model_dim;
        if tape.value(triplets).cols() != 2 * d {
            return Err(SggError::dim(
                "predict_heads",
                format!("triplet rows have {} columns, expected {}", tape.value(triplets).cols(), 2 * d),
            ));
        }
        let so = tape.slice_cols(triplets, 0, d);
        let p = tape.slice_cols(triplets, d, d);
        let sub_raw = self.sub_box.forward(tape, &self.store, so);
        let obj_raw = self.obj_box.forward(tape, &self.store, so);
        let sub_boxes = squash_boxes(tape, sub_raw);
        let obj_boxes = squash_boxes(tape, obj_raw);
        let sub_logits = self.sub_cls.forward(tape, &self.store, so);
        let obj_logits = self.obj_cls.forward(tape, &self.store, so);
        let groups: Vec<Var> = self
            .pred_heads
            .iter()
            .zip(self.cfg.predicate_groups)
            .filter(|(_, size)| *size > 0)
            .map(|(h, _)| h.forward(tape, &self.store, p))
            .collect();
        let pred_logits = if groups.len() == 1 { groups[0] } else { tape.concat_cols(&groups) };
        Ok(HeadOutputs {
            sub_boxes,
            obj_boxes,
            sub_logits,
            obj_logits,
            pred_logits,
        })
    }

    /// Full recorded forward pass for a current frame and its references.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        current: &FrameInput<'_>,
        refs: &[FrameInput<'_>],
        sw: Switches,
    ) -> Result<HeadOutputs> {
        let cur = self.frame_triplets_on_tape(tape, current, sw)?;
        let mut ref_vars = Vec::with_capacity(refs.len());
        for r in refs {
            ref_vars.push(self.frame_triplets_on_tape(tape, r, sw)?);
        }
        let agg = self.temporal_on_tape(tape, cur, &ref_vars)?;
        self.heads_on_tape(tape, agg)
    }

    /// Reads head outputs off the tape as probabilities and boxes.
    pub fn predictions(&self, tape: &Tape, out: &HeadOutputs) -> TripletPredictionSet {
        let boxes = |v: Var| {
            let t = tape.value(v);
            (0..t.rows())
                .map(|r| {
                    let b = t.row(r);
                    BoundingBox::raw(b[0], b[1], b[2], b[3])
                })
                .collect::<Vec<_>>()
        };
        let logits = tape.value(out.pred_logits);
        let mut offset = 0;
        let pred_probs = self.cfg.predicate_groups.map(|size| {
            let t = Tensor2::from_fn(logits.rows(), size, |r, c| crate::tensor::sigmoid(logits.get(r, offset + c)));
            offset += size;
            t
        });
        TripletPredictionSet {
            sub_boxes: boxes(out.sub_boxes),
            obj_boxes: boxes(out.obj_boxes),
            sub_probs: softmax_rows(tape.value(out.sub_logits)),
            obj_probs: softmax_rows(tape.value(out.obj_logits)),
            pred_probs,
        }
    }

    pub fn forward(
        &self,
        current: &FrameInput<'_>,
        refs: &[FrameInput<'_>],
        sw: Switches,
    ) -> Result<TripletPredictionSet> {
        let mut tape = Tape::new();
        let out = self.forward_on_tape(&mut tape, current, refs, sw)?;
        Ok(self.predictions(&tape, &out))
    }

    pub fn encode_image(&self, features: &Tensor2) -> Result<Tensor2> {
        let mut tape = Tape::new();
        let v = self.encode_image_on_tape(&mut tape, features)?;
        Ok(tape.value(v).clone())
    }

    pub fn subject_object_decode(&self, q: &QueryBlock, image: &Tensor2) -> Result<Tensor2> {
        self.run_decoder(&self.so_decoder, q, image)
    }

    pub fn predicate_decode(&self, q: &QueryBlock, memory: &Tensor2) -> Result<Tensor2> {
        self.run_decoder(&self.pred_decoder, q, memory)
    }

    fn run_decoder(&self, layers: &[DecoderLayer], q: &QueryBlock, memory: &Tensor2) -> Result<Tensor2> {
        if memory.rows() == 0 {
            return Err(SggError::EmptyKeys);
        }
        let mut tape = Tape::new();
        let c = tape.constant(q.content.clone());
        let p = tape.constant(q.position.clone());
        let m = tape.constant(memory.clone());
        let v = self.decode_on_tape(&mut tape, layers, c, p, m)?;
        Ok(tape.value(v).clone())
    }

    pub fn temporal_aggregate(&self, current: &Tensor2, refs: &[Tensor2]) -> Result<Tensor2> {
        for r in refs {
            if r.shape() != current.shape() {
                return Err(SggError::dim(
                    "temporal_aggregate",
                    format!("reference {:?} vs current {:?}", r.shape(), current.shape()),
                ));
            }
        }
        let mut tape = Tape::new();
        let c = tape.constant(current.clone());
        let rs: Vec<Var> = refs.iter().map(|r| tape.constant(r.clone())).collect();
        let v = self.temporal_on_tape(&mut tape, c, &rs)?;
        Ok(tape.value(v).clone())
    }

    pub fn predict_heads(&self, triplets: &Tensor2) -> Result<TripletPredictionSet> {
        let mut tape = Tape::new();
        let t = tape.constant(triplets.clone());
        let out = self.heads_on_tape(&mut tape, t)?;
        Ok(self.predictions(&tape, &out))
    }
}

/// Maps raw `(a, b, c, e)` to a valid corner box:
/// `x1 = σ(a)`, `x2 = x1 + (1 - x1)·σ(c)`, and likewise for `y`.
fn squash_boxes(tape: &mut Tape, raw: Var) -> Var {
    let s = tape.sigmoid(raw);
    let lo = tape.slice_cols(s, 0, 2);
    let frac = tape.slice_cols(s, 2, 2);
    let room = tape.scale(lo, -1.0);
    let room = tape.add_scalar(room, 1.0);
    let ext = tape.mul(room, frac);
    let hi = tape.add(lo, ext);
    tape.concat_cols(&[lo, hi])
}

/// Row-wise concatenation `[so | p]`.
pub fn form_triplets(so: &Tensor2, p: &Tensor2) -> Result<Tensor2> {
    if so.rows() != p.rows() {
        return Err(SggError::dim(
            "form_triplets",
            format!("{} subject-object rows vs {} predicate rows", so.rows(), p.rows()),
        ));
    }
    let cols = so.cols() + p.cols();
    Ok(Tensor2::from_fn(so.rows(), cols, |r, c| {
        if c < so.cols() {
            so.get(r, c)
        } else {
            p.get(r, c - so.cols())
        }
    }))
}

/// Inverse of [`form_triplets`] for a split at column `d`.
pub fn split_triplets(t: &Tensor2, d: usize) -> Result<(Tensor2, Tensor2)> {
    if d > t.cols() {
        return Err(SggError::dim("split_triplets", format!("split at {d} of {} columns", t.cols())));
    }
    let a = Tensor2::from_fn(t.rows(), d, |r, c| t.get(r, c));
    let b = Tensor2::from_fn(t.rows(), t.cols() - d, |r, c| t.get(r, d + c));
    Ok((a, b))
}
