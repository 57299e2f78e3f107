//! Deterministic stand-in for pretrained text and region encoders.
//!
//! In hashed mode every `(label, kind, quantized box)` key maps through
//! SHA-256 to a ChaCha stream, which fills a vector that is then scaled to
//! unit length. Table mode replaces the lookup with externally supplied
//! vectors keyed by exact label.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Result, SggError};
use crate::geometry::BoundingBox;

/// Cells per axis used to quantize region boxes before hashing.
pub const BOX_GRID: f64 = 16.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EmbeddingKind {
    Text,
    Visual,
}

impl EmbeddingKind {
    fn tag(self) -> &'static str {
        match self {
            EmbeddingKind::Text => "text",
            EmbeddingKind::Visual => "visual",
        }
    }
}

#[derive(Clone, Debug)]
pub struct EmbeddingProvider {
    dim: usize,
    seed: u64,
    table: Option<HashMap<String, Vec<f64>>>,
}

impl EmbeddingProvider {
    pub fn hashed(dim: usize, seed: u64) -> Self {
        EmbeddingProvider {
            dim,
            seed,
            table: None,
        }
    }

    /// Loads `label<TAB>v1 v2 ... vd` lines; vectors are normalized on load.
    pub fn from_table_file(path: &Path, dim: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SggError::io(path, e))?;
        let origin = path.display().to_string();
        let mut table = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| SggError::Parse {
                path: origin.clone(),
                line: i + 1,
                message,
            };
            let (label, values) = line
                .split_once('\t')
                .ok_or_else(|| err("expected `label<TAB>values`".into()))?;
            let v: Vec<f64> = values
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|_| err(format!("bad number `{s}`"))))
                .collect::<Result<_>>()?;
            if v.len() != dim {
                return Err(err(format!("{} values, expected {dim}", v.len())));
            }
            let v = normalize(v).ok_or_else(|| err("zero vector".into()))?;
            table.insert(label.to_string(), v);
        }
        Ok(EmbeddingProvider {
            dim,
            seed: 0,
            table: Some(table),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed(&self, label: &str, kind: EmbeddingKind, region: Option<&BoundingBox>) -> Result<Vec<f64>> {
        if label.is_empty() {
            return Err(SggError::Consistency("cannot embed an empty label".into()));
        }
        if let Some(table) = &self.table {
            return table
                .get(label)
                .cloned()
                .ok_or_else(|| SggError::MissingEmbedding(label.to_string()));
        }
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(kind.tag().as_bytes());
        hasher.update([0u8]);
        hasher.update(label.as_bytes());
        if let Some(b) = region {
            hasher.update([1u8]);
            for q in quantize(b) {
                hasher.update(q.to_le_bytes());
            }
        }
        let seed: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(seed);
        loop {
            let v: Vec<f64> = (0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            if let Some(v) = normalize(v) {
                return Ok(v);
            }
        }
    }

    /// Mean of several label embeddings, re-normalized.
    pub fn embed_mean(
        &self,
        labels: &[String],
        kind: EmbeddingKind,
        region: Option<&BoundingBox>,
    ) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.dim];
        for l in labels {
            for (a, v) in acc.iter_mut().zip(self.embed(l, kind, region)?) {
                *a += v;
            }
        }
        match normalize(acc) {
            Some(v) => Ok(v),
            // Antipodal embeddings cancel; fall back to the first label.
            None => self.embed(&labels[0], kind, region),
        }
    }
}

fn quantize(b: &BoundingBox) -> [u8; 4] {
    b.to_array()
        .map(|v| ((v * BOX_GRID).floor().clamp(0.0, BOX_GRID - 1.0)) as u8)
}

fn normalize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    for x in &mut v {
        *x /= norm;
    }
    Some(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn deterministic_unit_vectors() {
        let p = EmbeddingProvider::hashed(16, 7);
        let a = p.embed("holding", EmbeddingKind::Text, None).unwrap();
        let b = p.embed("holding", EmbeddingKind::Text, None).unwrap();
        assert_eq!(a, b);
        assert!((norm(&a) - 1.0).abs() < 1e-12);
        let v = p.embed("holding", EmbeddingKind::Visual, None).unwrap();
        assert_ne!(a, v);
    }

    #[test]
    fn box_quantization_controls_identity() {
        let p = EmbeddingProvider::hashed(8, 0);
        let b1 = BoundingBox::raw(0.10, 0.10, 0.50, 0.50);
        let b2 = BoundingBox::raw(0.11, 0.12, 0.51, 0.55);
        let b3 = BoundingBox::raw(0.20, 0.10, 0.50, 0.50);
        let e = |b| p.embed("cup", EmbeddingKind::Visual, Some(&b)).unwrap();
        assert_eq!(e(b1), e(b2));
        assert_ne!(e(b1), e(b3));
    }

    #[test]
    fn mean_of_predicates_is_normalized_mean() {
        let p = EmbeddingProvider::hashed(8, 1);
        let labels = vec!["holding".to_string(), "in_front_of".to_string()];
        let m = p.embed_mean(&labels, EmbeddingKind::Text, None).unwrap();
        let a = p.embed("holding", EmbeddingKind::Text, None).unwrap();
        let b = p.embed("in_front_of", EmbeddingKind::Text, None).unwrap();
        let raw: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x + y) / 2.0).collect();
        let n = norm(&raw);
        for (x, y) in m.iter().zip(&raw) {
            assert!((x - y / n).abs() < 1e-12);
        }
    }

    #[test]
    fn table_mode() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.tsv");
        std::fs::write(&path, "cup\t3 4\nholding\t0 2\n").unwrap();
        let p = EmbeddingProvider::from_table_file(&path, 2).unwrap();
        assert_eq!(p.embed("cup", EmbeddingKind::Text, None).unwrap(), vec![0.6, 0.8]);
        match p.embed("sofa", EmbeddingKind::Visual, None) {
            Err(SggError::MissingEmbedding(l)) => assert_eq!(l, "sofa"),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&path, "cup\t3 4 5\n").unwrap();
        assert!(EmbeddingProvider::from_table_file(&path, 2).is_err());
    }
}
