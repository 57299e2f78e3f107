//! Annotation, cue and frame-feature records, their line-delimited JSON
//! files, the synthetic scene generator and the embedding provider.
//!
//! Every file holds one JSON object per line, one frame per line, in frame
//! order. Field-by-field documentation lives in `docs/formats.md`.

pub mod embed;
pub mod remote;
pub mod synthetic;
pub mod vocab;

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SggError};
use crate::geometry::BoundingBox;
use crate::tensor::Tensor2;

pub use vocab::Vocabulary;

#[derive(Clone, Debug, PartialEq)]
pub struct Entity {
    pub class: usize,
    pub bbox: BoundingBox,
}

/// One subject-object pair with its predicates, stored as global predicate
/// ids grouped by attention / spatial / contacting.
#[derive(Clone, Debug, PartialEq)]
pub struct Relation {
    pub subject: usize,
    pub object: usize,
    pub predicates: [Vec<usize>; 3],
}

impl Relation {
    pub fn all_predicates(&self) -> impl Iterator<Item = usize> + '_ {
        self.predicates.iter().flatten().copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameAnnotation {
    pub video: String,
    pub frame: usize,
    pub entities: Vec<Entity>,
    pub relations: Vec<Relation>,
}

/// A relation triplet flattened to one predicate, with its boxes resolved.
#[derive(Clone, Debug, PartialEq)]
pub struct GtTriplet {
    pub pair: usize,
    pub subject_class: usize,
    pub subject_box: BoundingBox,
    pub object_class: usize,
    pub object_box: BoundingBox,
    pub predicate: usize,
}

impl FrameAnnotation {
    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        if self.relations.is_empty() {
            return Err(SggError::Consistency(format!(
                "frame {}/{} has no relation triplets",
                self.video, self.frame
            )));
        }
        for e in &self.entities {
            if e.class >= vocab.object_count() {
                return Err(SggError::Index {
                    what: "object classes",
                    index: e.class,
                    len: vocab.object_count(),
                });
            }
            e.bbox.validate()?;
        }
        for r in &self.relations {
            for idx in [r.subject, r.object] {
                if idx >= self.entities.len() {
                    return Err(SggError::Index {
                        what: "entities",
                        index: idx,
                        len: self.entities.len(),
                    });
                }
            }
            if r.all_predicates().next().is_none() {
                return Err(SggError::Consistency(format!(
                    "frame {}/{}: relation {}->{} has no predicate",
                    self.video, self.frame, r.subject, r.object
                )));
            }
            for (g, ids) in r.predicates.iter().enumerate() {
                for &p in ids {
                    if p >= vocab.predicate_count() || vocab.group_of(p) != g {
                        return Err(SggError::Consistency(format!(
                            "predicate id {p} is not in group {}",
                            vocab::GROUP_NAMES[g]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Ground-truth triplets, one per (pair, predicate), pair-major.
    pub fn triplets(&self) -> Vec<GtTriplet> {
        let mut out = Vec::new();
        for (pair, r) in self.relations.iter().enumerate() {
            let (s, o) = (&self.entities[r.subject], &self.entities[r.object]);
            for p in r.all_predicates() {
                out.push(GtTriplet {
                    pair,
                    subject_class: s.class,
                    subject_box: s.bbox,
                    object_class: o.class,
                    object_box: o.bbox,
                    predicate: p,
                });
            }
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct EntityRecord {
    label: String,
    #[serde(rename = "box")]
    bbox: BoundingBox,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RelationRecord {
    subject: usize,
    object: usize,
    #[serde(default)]
    attention: Vec<String>,
    #[serde(default)]
    spatial: Vec<String>,
    #[serde(default)]
    contacting: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationRecord {
    video: String,
    frame: usize,
    entities: Vec<EntityRecord>,
    triplets: Vec<RelationRecord>,
}

impl AnnotationRecord {
    fn from_annotation(a: &FrameAnnotation, vocab: &Vocabulary) -> Self {
        let labels = |ids: &[usize]| ids.iter().map(|&p| vocab.predicate_label(p).to_string()).collect();
        AnnotationRecord {
            video: a.video.clone(),
            frame: a.frame,
            entities: a
                .entities
                .iter()
                .map(|e| EntityRecord {
                    label: vocab.object_label(e.class).to_string(),
                    bbox: e.bbox,
                })
                .collect(),
            triplets: a
                .relations
                .iter()
                .map(|r| RelationRecord {
                    subject: r.subject,
                    object: r.object,
                    attention: labels(&r.predicates[0]),
                    spatial: labels(&r.predicates[1]),
                    contacting: labels(&r.predicates[2]),
                })
                .collect(),
        }
    }

    fn into_annotation(self, vocab: &Vocabulary) -> Result<FrameAnnotation> {
        let entities = self
            .entities
            .into_iter()
            .map(|e| {
                Ok(Entity {
                    class: vocab.object_id(&e.label)?,
                    bbox: e.bbox,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut relations = Vec::with_capacity(self.triplets.len());
        for t in self.triplets {
            let ids = |labels: &[String]| labels.iter().map(|l| vocab.predicate_id(l)).collect::<Result<Vec<_>>>();
            relations.push(Relation {
                subject: t.subject,
                object: t.object,
                predicates: [ids(&t.attention)?, ids(&t.spatial)?, ids(&t.contacting)?],
            });
        }
        let a = FrameAnnotation {
            video: self.video,
            frame: self.frame,
            entities,
            relations,
        };
        a.validate(vocab)?;
        Ok(a)
    }
}

/// One plausible (subject, object, predicates, boxes) candidate for a frame.
/// Boxes are in the provider's pixel space; see [`FrameCues::width`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cue {
    pub subject: String,
    pub object: String,
    pub predicates: Vec<String>,
    pub subject_box: [f64; 4],
    pub object_box: [f64; 4],
    pub confidence: f64,
}

/// Cues for a single frame, ordered by the provider (highest confidence first).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameCues {
    pub video: String,
    pub frame: usize,
    /// Width of the frame the boxes refer to (1.0 for normalized boxes).
    pub width: f64,
    pub height: f64,
    pub cues: Vec<Cue>,
}

impl FrameCues {
    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(SggError::Consistency(format!(
                "cue frame {}/{} has non-positive size",
                self.video, self.frame
            )));
        }
        for (i, c) in self.cues.iter().enumerate() {
            if c.subject.is_empty() || c.object.is_empty() {
                return Err(SggError::Consistency(format!("cue {i} has an empty label")));
            }
            if c.predicates.is_empty() || c.predicates.iter().any(String::is_empty) {
                return Err(SggError::Consistency(format!("cue {i} needs nonempty predicate labels")));
            }
            if !(0.0..=1.0).contains(&c.confidence) {
                return Err(SggError::Consistency(format!(
                    "cue {i} confidence {} outside [0, 1]",
                    c.confidence
                )));
            }
            for b in [c.subject_box, c.object_box] {
                let ok = b.iter().all(|v| v.is_finite())
                    && b[0] <= b[2]
                    && b[1] <= b[3]
                    && b[0] >= 0.0
                    && b[1] >= 0.0
                    && b[2] <= self.width
                    && b[3] <= self.height;
                if !ok {
                    return Err(SggError::Consistency(format!(
                        "cue {i} box {b:?} invalid for a {}x{} frame",
                        self.width, self.height
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn normalize(&self, b: [f64; 4]) -> BoundingBox {
        BoundingBox::raw(
            b[0] / self.width,
            b[1] / self.height,
            b[2] / self.width,
            b[3] / self.height,
        )
        .clamped()
    }

    pub fn subject_box(&self, i: usize) -> BoundingBox {
        self.normalize(self.cues[i].subject_box)
    }

    pub fn object_box(&self, i: usize) -> BoundingBox {
        self.normalize(self.cues[i].object_box)
    }
}

impl Cue {
    /// True when any label falls outside the vocabulary.
    pub fn out_of_vocabulary(&self, vocab: &Vocabulary) -> bool {
        !vocab.has_object(&self.subject)
            || !vocab.has_object(&self.object)
            || self.predicates.iter().any(|p| !vocab.has_predicate(p))
    }
}

/// Rendered occupancy grid of one frame: `grid × grid` cells, each holding
/// `channels` values (one per object class).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameFeatures {
    pub video: String,
    pub frame: usize,
    pub grid: usize,
    pub channels: usize,
    pub cells: Vec<f64>,
}

impl FrameFeatures {
    pub fn validate(&self) -> Result<()> {
        if self.cells.len() != self.grid * self.grid * self.channels {
            return Err(SggError::Consistency(format!(
                "frame {}/{}: {} cell values for a {g}x{g}x{} grid",
                self.video,
                self.frame,
                self.cells.len(),
                self.channels,
                g = self.grid
            )));
        }
        Ok(())
    }

    /// `L × channels` token matrix, `L = grid²`, row-major over cells.
    pub fn tokens(&self) -> Tensor2 {
        Tensor2::new(self.grid * self.grid, self.channels, self.cells.clone())
            .expect("validated frame features")
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("records serialize");
        buf.push(b'\n');
    }
    std::fs::write(path, buf).map_err(|e| SggError::io(path, e))
}

/// Parses one record per nonblank line. Errors carry the 1-based line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let text = std::fs::read_to_string(path).map_err(|e| SggError::io(path, e))?;
    parse_jsonl(&text, &path.display().to_string())
}

pub fn parse_jsonl<T: DeserializeOwned>(text: &str, origin: &str) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| SggError::Parse {
            path: origin.to_string(),
            line: i + 1,
            message: format!("column {}: {e}", e.column()),
        })?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

fn at_line(origin: &str, line: usize, e: SggError) -> SggError {
    match e {
        e @ SggError::Vocabulary { .. } => e,
        other => SggError::Parse {
            path: origin.to_string(),
            line,
            message: other.to_string(),
        },
    }
}

pub fn save_annotations(path: &Path, annotations: &[FrameAnnotation], vocab: &Vocabulary) -> Result<()> {
    let records: Vec<_> = annotations
        .iter()
        .map(|a| AnnotationRecord::from_annotation(a, vocab))
        .collect();
    write_jsonl(path, &records)
}

pub fn parse_annotations(text: &str, origin: &str, vocab: &Vocabulary) -> Result<Vec<FrameAnnotation>> {
    parse_jsonl::<AnnotationRecord>(text, origin)?
        .into_iter()
        .map(|(line, r)| r.into_annotation(vocab).map_err(|e| at_line(origin, line, e)))
        .collect()
}

pub fn load_annotations(path: &Path, vocab: &Vocabulary) -> Result<Vec<FrameAnnotation>> {
    let text = std::fs::read_to_string(path).map_err(|e| SggError::io(path, e))?;
    parse_annotations(&text, &path.display().to_string(), vocab)
}

pub fn save_cues(path: &Path, cues: &[FrameCues]) -> Result<()> {
    write_jsonl(path, cues)
}

pub fn parse_cues(text: &str, origin: &str) -> Result<Vec<FrameCues>> {
    parse_jsonl::<FrameCues>(text, origin)?
        .into_iter()
        .map(|(line, c)| {
            c.validate().map_err(|e| at_line(origin, line, e))?;
            Ok(c)
        })
        .collect()
}

pub fn load_cues(path: &Path) -> Result<Vec<FrameCues>> {
    let text = std::fs::read_to_string(path).map_err(|e| SggError::io(path, e))?;
    parse_cues(&text, &path.display().to_string())
}

pub fn save_frames(path: &Path, frames: &[FrameFeatures]) -> Result<()> {
    write_jsonl(path, frames)
}

pub fn load_frames(path: &Path) -> Result<Vec<FrameFeatures>> {
    let origin = path.display().to_string();
    read_jsonl::<FrameFeatures>(path)?
        .into_iter()
        .map(|(line, f)| {
            f.validate().map_err(|e| at_line(&origin, line, e))?;
            Ok(f)
        })
        .collect()
}

/// Appends one complete record line in a single write.
pub(crate) fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| SggError::io(path, e))?;
    let mut buf = line.as_bytes().to_vec();
    buf.push(b'\n');
    f.write_all(&buf).map_err(|e| SggError::io(path, e))
}
