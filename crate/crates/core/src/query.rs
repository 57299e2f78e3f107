//! Query construction: cue-derived content plus instance-agnostic position.

use std::path::Path;

use crate::data::embed::{EmbeddingKind, EmbeddingProvider};
use crate::data::FrameCues;
use crate::error::{Result, SggError};
use crate::geometry::BoundingBox;
use crate::params::read_checkpoint;
use crate::tensor::{linear, Tensor2};

/// Paired content and position matrices of equal shape.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryBlock {
    pub content: Tensor2,
    pub position: Tensor2,
}

impl QueryBlock {
    pub fn new(content: Tensor2, position: Tensor2) -> Result<Self> {
        if content.shape() != position.shape() {
            return Err(SggError::dim(
                "query block",
                format!("content {:?} vs position {:?}", content.shape(), position.shape()),
            ));
        }
        Ok(QueryBlock { content, position })
    }

    /// Content plus position, elementwise.
    pub fn combined(&self) -> Tensor2 {
        self.content.zip_map(&self.position, |c, p| c + p)
    }
}

/// Position anchors `W`, one row per query.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorWeights {
    pub w: Tensor2,
}

impl AnchorWeights {
    /// Reads an `N × d` table stored in the checkpoint format under the
    /// entry name `anchors`, or as the file's only entry.
    pub fn load(path: &Path, queries: usize, dim: usize) -> Result<Self> {
        let entries = read_checkpoint(path)?;
        let found = match entries.iter().find(|(n, _)| n == "anchors") {
            Some((_, t)) => t.clone(),
            None if entries.len() == 1 => entries[0].1.clone(),
            None => {
                return Err(SggError::Compatibility {
                    name: "anchors".into(),
                    detail: format!("is missing from {}", path.display()),
                })
            }
        };
        if found.shape() != (queries, dim) {
            return Err(SggError::Compatibility {
                name: "anchors".into(),
                detail: format!(
                    "has shape {}x{} in {} but the model needs {queries}x{dim}",
                    found.rows(),
                    found.cols(),
                    path.display()
                ),
            });
        }
        Ok(AnchorWeights { w: found })
    }
}

/// Per-cue text and visual embeddings (one row per cue) and cue boxes.
#[derive(Clone, Debug, PartialEq)]
pub struct CueEmbeddings {
    pub sub_t: Tensor2,
    pub obj_t: Tensor2,
    pub pred_t: Tensor2,
    pub sub_v: Tensor2,
    pub obj_v: Tensor2,
    pub pred_v: Tensor2,
    pub boxes: Vec<(BoundingBox, BoundingBox)>,
}

impl CueEmbeddings {
    pub fn empty(embed_dim: usize) -> Self {
        let z = Tensor2::zeros(0, embed_dim);
        CueEmbeddings {
            sub_t: z.clone(),
            obj_t: z.clone(),
            pred_t: z.clone(),
            sub_v: z.clone(),
            obj_v: z.clone(),
            pred_v: z,
            boxes: Vec::new(),
        }
    }

    /// Embeds the first `limit` cues in provider order. Visual embeddings are
    /// keyed by the region box; the predicate region is the union box.
    pub fn from_cues(cues: &FrameCues, provider: &EmbeddingProvider, limit: usize) -> Result<Self> {
        let x = cues.cues.len().min(limit);
        let d = provider.dim();
        let mut rows: [Vec<f64>; 6] = Default::default();
        let mut boxes = Vec::with_capacity(x);
        for (i, c) in cues.cues.iter().take(x).enumerate() {
            let (sb, ob) = (cues.subject_box(i), cues.object_box(i));
            let union = sb.hull(&ob);
            let parts = [
                provider.embed(&c.subject, EmbeddingKind::Text, None)?,
                provider.embed(&c.object, EmbeddingKind::Text, None)?,
                provider.embed_mean(&c.predicates, EmbeddingKind::Text, None)?,
                provider.embed(&c.subject, EmbeddingKind::Visual, Some(&sb))?,
                provider.embed(&c.object, EmbeddingKind::Visual, Some(&ob))?,
                provider.embed_mean(&c.predicates, EmbeddingKind::Visual, Some(&union))?,
            ];
            for (acc, p) in rows.iter_mut().zip(parts) {
                acc.extend(p);
            }
            boxes.push((sb, ob));
        }
        let [st, ot, pt, sv, ov, pv] = rows.map(|r| Tensor2::new(x, d, r).expect("embedding rows"));
        let e = CueEmbeddings {
            sub_t: st,
            obj_t: ot,
            pred_t: pt,
            sub_v: sv,
            obj_v: ov,
            pred_v: pv,
            boxes,
        };
        Ok(e)
    }

    pub fn len(&self) -> usize {
        self.sub_t.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn embed_dim(&self) -> usize {
        self.sub_t.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let x = self.len();
        let d = self.embed_dim();
        for t in [&self.obj_t, &self.pred_t, &self.sub_v, &self.obj_v, &self.pred_v] {
            if t.shape() != (x, d) {
                return Err(SggError::Consistency(format!(
                    "cue embedding block is {:?}, expected {x}x{d}",
                    t.shape()
                )));
            }
        }
        if self.boxes.len() != x {
            return Err(SggError::Consistency(format!(
                "{} cue box pairs for {x} cues",
                self.boxes.len()
            )));
        }
        Ok(())
    }

    /// Restricts to the first `n` cues.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        let take = |t: &Tensor2| Tensor2::new(n, t.cols(), t.data()[..n * t.cols()].to_vec()).expect("prefix rows");
        CueEmbeddings {
            sub_t: take(&self.sub_t),
            obj_t: take(&self.obj_t),
            pred_t: take(&self.pred_t),
            sub_v: take(&self.sub_v),
            obj_v: take(&self.obj_v),
            pred_v: take(&self.pred_v),
            boxes: self.boxes[..n].to_vec(),
        }
    }

    /// `N × 2d_l` matrix whose first `x` rows are `concat(sub_t, obj_t)` and
    /// whose remaining rows are zero.
    pub fn subject_object_input(&self, queries: usize) -> Result<Tensor2> {
        self.check_capacity(queries)?;
        let d = self.embed_dim();
        let mut out = Tensor2::zeros(queries, 2 * d);
        for i in 0..self.len() {
            let row = out.row_mut(i);
            row[..d].copy_from_slice(self.sub_t.row(i));
            row[d..].copy_from_slice(self.obj_t.row(i));
        }
        Ok(out)
    }

    /// `N × d_l` matrix of predicate text embeddings, zero-padded.
    pub fn predicate_input(&self, queries: usize) -> Result<Tensor2> {
        self.check_capacity(queries)?;
        let mut out = Tensor2::zeros(queries, self.embed_dim());
        for i in 0..self.len() {
            out.row_mut(i).copy_from_slice(self.pred_t.row(i));
        }
        Ok(out)
    }

    fn check_capacity(&self, queries: usize) -> Result<()> {
        if self.len() > queries {
            return Err(SggError::Capacity {
                what: "cues per frame",
                got: self.len(),
                limit: queries,
            });
        }
        Ok(())
    }
}

/// Subject-object queries: content rows `0..x` are `proj · concat(sub_t, obj_t)`,
/// the rest zero; position is the anchor table.
pub fn build_subject_object_queries(
    cues: &CueEmbeddings,
    anchors: &AnchorWeights,
    proj: &Tensor2,
) -> Result<QueryBlock> {
    let input = cues.subject_object_input(anchors.w.rows())?;
    let content = linear(&input, proj, None)?;
    QueryBlock::new(content, anchors.w.clone())
}

/// Predicate queries: content rows `0..x` are `proj · pred_t`, the rest
/// zero; position is the subject-object decoder output row for row.
pub fn build_predicate_queries(cues: &CueEmbeddings, so_out: &Tensor2, proj: &Tensor2) -> Result<QueryBlock> {
    let input = cues.predicate_input(so_out.rows())?;
    let content = linear(&input, proj, None)?;
    QueryBlock::new(content, so_out.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_dim_cues(rows: &[([f64; 2], [f64; 2], [f64; 2])]) -> CueEmbeddings {
        let mut e = CueEmbeddings::empty(2);
        let col = |f: &dyn Fn(&([f64; 2], [f64; 2], [f64; 2])) -> [f64; 2]| {
            Tensor2::from_rows(&rows.iter().map(f).collect::<Vec<_>>()).unwrap_or(Tensor2::zeros(0, 2))
        };
        e.sub_t = col(&|r| r.0);
        e.obj_t = col(&|r| r.1);
        e.pred_t = col(&|r| r.2);
        e.sub_v = e.sub_t.clone();
        e.obj_v = e.obj_t.clone();
        e.pred_v = e.pred_t.clone();
        e.boxes = vec![(BoundingBox::raw(0.0, 0.0, 1.0, 1.0), BoundingBox::raw(0.0, 0.0, 1.0, 1.0)); rows.len()];
        e
    }

    #[test]
    fn empty_cues_reduce_to_anchors() {
        let anchors = AnchorWeights {
            w: Tensor2::from_fn(3, 4, |r, c| r as f64 - 0.5 * c as f64),
        };
        let proj = Tensor2::from_fn(4, 4, |r, c| (r * 4 + c) as f64);
        let q = build_subject_object_queries(&CueEmbeddings::empty(2), &anchors, &proj).unwrap();
        assert!(q.content.data().iter().all(|&v| v == 0.0));
        assert_eq!(q.combined(), anchors.w);
    }

    #[test]
    fn hand_computed_row() {
        let cues = two_dim_cues(&[([1.0, 0.0], [0.0, 1.0], [1.0, 0.0])]);
        let anchors = AnchorWeights {
            w: Tensor2::filled(2, 4, 0.1),
        };
        let q = build_subject_object_queries(&cues, &anchors, &Tensor2::identity(4)).unwrap();
        let row = q.combined().row(0).to_vec();
        let want = [1.1, 0.1, 0.1, 1.1];
        for (a, b) in row.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(q.combined().row(1), &[0.1; 4]);
    }

    #[test]
    fn capacity_enforced() {
        let cues = two_dim_cues(&[([1.0, 0.0], [0.0, 1.0], [1.0, 0.0]); 3]);
        let anchors = AnchorWeights {
            w: Tensor2::zeros(2, 4),
        };
        assert!(matches!(
            build_subject_object_queries(&cues, &anchors, &Tensor2::identity(4)),
            Err(SggError::Capacity { got: 3, limit: 2, .. })
        ));
        let full = cues.truncated(2);
        let q = build_subject_object_queries(&full, &anchors, &Tensor2::identity(4)).unwrap();
        assert!((0..2).all(|r| q.content.row(r).iter().any(|&v| v != 0.0)));
    }

    #[test]
    fn predicate_queries_use_decoder_output_as_position() {
        let cues = two_dim_cues(&[([1.0, 0.0], [0.0, 1.0], [0.6, 0.8])]);
        let so = Tensor2::from_rows(&[[0.5, -1.0], [2.0, 3.0]]).unwrap();
        let q = build_predicate_queries(&cues, &so, &Tensor2::identity(2)).unwrap();
        assert_eq!(q.position, so);
        let c = q.combined();
        assert!((c.get(0, 0) - 1.1).abs() < 1e-15 && (c.get(0, 1) + 0.2).abs() < 1e-15);
        assert_eq!(c.row(1), so.row(1));
        assert!(build_predicate_queries(&cues, &Tensor2::zeros(0, 2), &Tensor2::identity(2)).is_err());
    }

    #[test]
    fn no_cues_means_predicate_query_is_position() {
        let so = Tensor2::from_fn(3, 2, |r, c| (r + c) as f64);
        let q = build_predicate_queries(&CueEmbeddings::empty(2), &so, &Tensor2::identity(2)).unwrap();
        assert_eq!(q.combined(), so);
    }
}
