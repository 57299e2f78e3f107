//! Multi-modal feature bank: per-cue textual, visual and spatial tokens
//! encoded by self-attention into the predicate decoder's memory.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Result, SggError};
use crate::geometry::BoundingBox;
use crate::nn::{EncoderLayer, Linear};
use crate::params::{ParamId, ParamStore};
use crate::query::CueEmbeddings;
use crate::tensor::{linear, sinusoidal_pe, Tensor2};

/// Tokens emitted per cue region.
pub const TOKENS_PER_REGION: usize = 7;
pub const SPATIAL_DIM: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    SubText,
    SubVis,
    ObjText,
    ObjVis,
    PredText,
    PredVis,
    Spatial,
    Null,
}

/// Fixed role order inside each region block.
pub const REGION_ROLES: [Role; TOKENS_PER_REGION] = [
    Role::SubText,
    Role::SubVis,
    Role::ObjText,
    Role::ObjVis,
    Role::PredText,
    Role::PredVis,
    Role::Spatial,
];

#[derive(Clone, Debug, PartialEq)]
pub struct MultiModalBank {
    pub tokens: Tensor2,
    pub roles: Vec<Role>,
    /// Cue index of each token; `None` for the null token.
    pub region_index: Vec<Option<usize>>,
}

/// `[b_sub, b_obj, c_sub - c_obj, a_sub, a_obj]`.
pub fn spatial_vector(sub: &BoundingBox, obj: &BoundingBox) -> [f64; SPATIAL_DIM] {
    let (sc, oc) = (sub.center(), obj.center());
    [
        sub.x1,
        sub.y1,
        sub.x2,
        sub.y2,
        obj.x1,
        obj.y1,
        obj.x2,
        obj.y2,
        sc.0 - oc.0,
        sc.1 - oc.1,
        sub.area(),
        obj.area(),
    ]
}

/// Projected spatial feature of one subject-object pair.
pub fn spatial_feature(sub: &BoundingBox, obj: &BoundingBox, proj: &Tensor2) -> Result<Vec<f64>> {
    let v = Tensor2::row_vector(&spatial_vector(sub, obj));
    Ok(linear(&v, proj, None)?.into_data())
}

/// Learned pieces of the bank: shared per-modality projections, the spatial
/// projection, the null token and the bank encoder.
#[derive(Clone, Debug)]
pub struct BankParams {
    pub text: Linear,
    pub visual: Linear,
    pub spatial: Linear,
    pub null: ParamId,
    pub encoder: Vec<EncoderLayer>,
    pub dim: usize,
}

impl BankParams {
    pub fn new(
        store: &mut ParamStore,
        embed_dim: usize,
        dim: usize,
        heads: usize,
        layers: usize,
        ff_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let text = Linear::new(store, "bank.text", embed_dim, dim, false, rng)?;
        let visual = Linear::new(store, "bank.visual", embed_dim, dim, false, rng)?;
        let spatial = Linear::new(store, "bank.spatial", SPATIAL_DIM, dim, false, rng)?;
        let null = store.add_uniform("bank.null", 1, dim, dim, rng)?;
        let encoder = (0..layers)
            .map(|l| EncoderLayer::new(store, &format!("bank.enc.{l}"), dim, heads, ff_dim, rng))
            .collect::<Result<_>>()?;
        Ok(BankParams {
            text,
            visual,
            spatial,
            null,
            encoder,
            dim,
        })
    }

    /// Records bank assembly; returns the `T × d` token matrix.
    pub fn assemble_on_tape(&self, tape: &mut Tape, store: &ParamStore, cues: &CueEmbeddings) -> Result<Var> {
        cues.validate()?;
        let x = cues.len();
        if x == 0 {
            return Ok(tape.param(store, self.null));
        }
        let stack = |parts: [&Tensor2; 3]| {
            let cols = parts[0].cols();
            let mut data = Vec::with_capacity(3 * x * cols);
            for p in parts {
                data.extend_from_slice(p.data());
            }
            Tensor2::new(3 * x, cols, data).expect("stacked embeddings")
        };
        let text_in = tape.constant(stack([&cues.sub_t, &cues.obj_t, &cues.pred_t]));
        let vis_in = tape.constant(stack([&cues.sub_v, &cues.obj_v, &cues.pred_v]));
        let spatial_rows: Vec<[f64; SPATIAL_DIM]> = cues.boxes.iter().map(|(s, o)| spatial_vector(s, o)).collect();
        let spatial_in = tape.constant(Tensor2::from_rows(&spatial_rows)?);

        let text = self.text.forward(tape, store, text_in);
        let vis = self.visual.forward(tape, store, vis_in);
        let spatial = self.spatial.forward(tape, store, spatial_in);
        // Stacked layout: text rows [sub 0..x, obj x..2x, pred 2x..3x],
        // visual rows at offset 3x, spatial rows at offset 6x.
        let all = tape.concat_rows(&[text, vis, spatial]);
        let mut order = Vec::with_capacity(TOKENS_PER_REGION * x);
        for i in 0..x {
            order.extend_from_slice(&[i, 3 * x + i, x + i, 4 * x + i, 2 * x + i, 5 * x + i, 6 * x + i]);
        }
        Ok(tape.gather_rows(all, &order))
    }

    /// Adds sinusoidal positions and runs the bank encoder.
    pub fn encode_on_tape(&self, tape: &mut Tape, store: &ParamStore, tokens: Var) -> Result<Var> {
        let t = tape.value(tokens).rows();
        if t == 0 {
            return Err(SggError::EmptyKeys);
        }
        let pe = tape.constant(sinusoidal_pe(t, self.dim)?);
        let mut h = tape.add(tokens, pe);
        for layer in &self.encoder {
            h = layer.forward(tape, store, h)?;
        }
        Ok(h)
    }

    pub fn assemble(&self, store: &ParamStore, cues: &CueEmbeddings) -> Result<MultiModalBank> {
        let mut tape = Tape::new();
        let v = self.assemble_on_tape(&mut tape, store, cues)?;
        let (roles, region_index) = if cues.is_empty() {
            (vec![Role::Null], vec![None])
        } else {
            let roles = (0..cues.len()).flat_map(|_| REGION_ROLES).collect();
            let index = (0..cues.len())
                .flat_map(|i| std::iter::repeat_n(Some(i), TOKENS_PER_REGION))
                .collect();
            (roles, index)
        };
        Ok(MultiModalBank {
            tokens: tape.value(v).clone(),
            roles,
            region_index,
        })
    }

    pub fn encode(&self, store: &ParamStore, bank: &MultiModalBank) -> Result<Tensor2> {
        let mut tape = Tape::new();
        let t = tape.constant(bank.tokens.clone());
        let v = self.encode_on_tape(&mut tape, store, t)?;
        Ok(tape.value(v).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn bx(a: [f64; 4]) -> BoundingBox {
        BoundingBox::raw(a[0], a[1], a[2], a[3])
    }

    #[test]
    fn spatial_vector_hand_value() {
        let v = spatial_vector(&bx([0.1, 0.1, 0.5, 0.5]), &bx([0.4, 0.4, 0.8, 0.8]));
        let want = [0.1, 0.1, 0.5, 0.5, 0.4, 0.4, 0.8, 0.8, -0.3, -0.3, 0.16, 0.16];
        for (a, b) in v.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{v:?}");
        }
    }

    #[test]
    fn spatial_vector_identical_boxes() {
        let b = bx([0.2, 0.3, 0.6, 0.9]);
        let v = spatial_vector(&b, &b);
        assert_eq!(&v[8..10], &[0.0, 0.0]);
        assert_eq!(v[10], v[11]);
    }

    #[test]
    fn bank_shapes() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = BankParams::new(&mut store, 4, 8, 2, 1, 16, &mut rng).unwrap();
        let mut cues = CueEmbeddings::empty(4);
        let bank = p.assemble(&store, &cues).unwrap();
        assert_eq!(bank.tokens.shape(), (1, 8));
        assert_eq!(bank.roles, vec![Role::Null]);

        let e = Tensor2::from_fn(2, 4, |r, c| (r * 4 + c) as f64 * 0.1);
        cues.sub_t = e.clone();
        cues.obj_t = e.clone();
        cues.pred_t = e.clone();
        cues.sub_v = e.clone();
        cues.obj_v = e.clone();
        cues.pred_v = e;
        cues.boxes = vec![(bx([0.1, 0.1, 0.3, 0.3]), bx([0.2, 0.2, 0.4, 0.6])); 2];
        let bank = p.assemble(&store, &cues).unwrap();
        assert_eq!(bank.tokens.shape(), (14, 8));
        let idx: Vec<_> = bank.region_index.iter().map(|i| i.unwrap()).collect();
        assert_eq!(idx, [vec![0; 7], vec![1; 7]].concat());
        let enc = p.encode(&store, &bank).unwrap();
        assert_eq!(enc.shape(), bank.tokens.shape());
        assert_eq!(enc, p.encode(&store, &bank).unwrap());
    }
}
