//! Synthetic desk-scale videos with a long-tailed predicate distribution.
//!
//! Each video holds one person (entity 0, class 0) and one to three objects.
//! Every person-object pair carries a single predicate, drawn once per video
//! from a Zipf law over the global predicate vocabulary. The predicate fixes
//! the direction from the person to the object, so relations are visible in
//! the rendered occupancy grid and in the cue boxes.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Cue, Entity, FrameAnnotation, FrameCues, FrameFeatures, Relation, Vocabulary};
use crate::error::{Result, SggError};
use crate::geometry::{iou, BoundingBox};

const MAX_PLACEMENT_TRIES: usize = 200;
const MAX_OBJECT_IOU: f64 = 0.3;
const BOX_JITTER: f64 = 0.05;
const SCENE_STREAM: u64 = 0;
const CUE_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub frames: usize,
    pub frames_per_video: usize,
    /// Cells per axis of the rendered grid; `L = grid²`.
    pub grid: usize,
    pub object_classes: usize,
    pub predicate_groups: [usize; 3],
    pub zipf_exponent: f64,
    /// Probability of perturbing each cue field independently.
    pub cue_noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 0,
            frames: 30,
            frames_per_video: 5,
            grid: 6,
            object_classes: 6,
            predicate_groups: [3, 4, 5],
            zipf_exponent: 1.0,
            cue_noise: 0.0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return Err(SggError::Config(format!(
                "zipf_exponent must be finite and >= 0, got {}",
                self.zipf_exponent
            )));
        }
        if !(0.0..=1.0).contains(&self.cue_noise) {
            return Err(SggError::Config(format!(
                "cue_noise must be in [0, 1], got {}",
                self.cue_noise
            )));
        }
        if self.frames_per_video == 0 {
            return Err(SggError::Config("frames_per_video must be >= 1".into()));
        }
        if self.grid == 0 {
            return Err(SggError::Config("grid must be >= 1".into()));
        }
        if self.object_classes < 2 {
            return Err(SggError::Config("object_classes must be >= 2".into()));
        }
        if self.predicate_groups.iter().sum::<usize>() == 0 {
            return Err(SggError::Config("need at least one predicate".into()));
        }
        Ok(())
    }

    pub fn vocabulary(&self) -> Result<Vocabulary> {
        Vocabulary::from_counts(self.object_classes, self.predicate_groups)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub vocab: Vocabulary,
    pub frames: Vec<FrameFeatures>,
    pub annotations: Vec<FrameAnnotation>,
    pub cues: Vec<FrameCues>,
}

/// Unnormalized Zipf weights `(rank + 1)^-s` over predicate ids.
pub fn zipf_weights(count: usize, exponent: f64) -> Vec<f64> {
    (0..count).map(|k| ((k + 1) as f64).powf(-exponent)).collect()
}

struct VideoPlan {
    person_center: (f64, f64),
    person_size: (f64, f64),
    velocity: (f64, f64),
    objects: Vec<PlannedObject>,
}

struct PlannedObject {
    class: usize,
    predicate: usize,
    offset: (f64, f64),
    size: (f64, f64),
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let vocab = cfg.vocabulary()?;
    let predicates = vocab.predicate_count();
    let zipf = WeightedIndex::new(zipf_weights(predicates, cfg.zipf_exponent))
        .map_err(|e| SggError::Config(format!("zipf weights: {e}")))?;

    let mut scene_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    scene_rng.set_stream(SCENE_STREAM);
    let mut cue_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    cue_rng.set_stream(CUE_STREAM);

    let mut out = SyntheticDataset {
        vocab,
        frames: Vec::with_capacity(cfg.frames),
        annotations: Vec::with_capacity(cfg.frames),
        cues: Vec::with_capacity(cfg.frames),
    };
    let videos = cfg.frames.div_ceil(cfg.frames_per_video);
    for v in 0..videos {
        let video = format!("v{v:03}");
        let plan = plan_video(cfg, predicates, &zipf, &mut scene_rng)?;
        let len = cfg.frames_per_video.min(cfg.frames - v * cfg.frames_per_video);
        for t in 0..len {
            let annotation = render_annotation(&video, t, &plan, &out.vocab);
            out.frames.push(render_grid(&annotation, cfg));
            out.cues
                .push(make_cues(&annotation, cfg, &out.vocab, &mut cue_rng));
            out.annotations.push(annotation);
        }
    }
    Ok(out)
}

fn plan_video(
    cfg: &SyntheticConfig,
    predicates: usize,
    zipf: &WeightedIndex<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<VideoPlan> {
    let person_center = (rng.random_range(0.35..0.65), rng.random_range(0.35..0.65));
    let person_size = (rng.random_range(0.14..0.22), rng.random_range(0.25..0.40));
    let velocity = (rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01));
    let count = rng.random_range(1..=3usize);
    let mut objects: Vec<PlannedObject> = Vec::with_capacity(count);
    for _ in 0..count {
        let class = rng.random_range(1..cfg.object_classes);
        let predicate = zipf.sample(rng);
        let base = std::f64::consts::TAU * predicate as f64 / predicates as f64;
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_TRIES {
            let angle = base + rng.random_range(-0.15..0.15);
            let radius = rng.random_range(0.16..0.32);
            let size = (rng.random_range(0.07..0.13), rng.random_range(0.07..0.13));
            let candidate = PlannedObject {
                class,
                predicate,
                offset: (radius * angle.cos(), radius * angle.sin()),
                size,
            };
            let b = object_box(person_center, &candidate);
            let clear = objects
                .iter()
                .all(|o| iou(&object_box(person_center, o), &b) < MAX_OBJECT_IOU);
            if clear {
                placed = Some(candidate);
                break;
            }
        }
        let o = placed.ok_or_else(|| {
            SggError::Generation(format!(
                "could not place object {} without overlap after {MAX_PLACEMENT_TRIES} tries",
                objects.len()
            ))
        })?;
        objects.push(o);
    }
    Ok(VideoPlan {
        person_center,
        person_size,
        velocity,
        objects,
    })
}

fn object_box(center: (f64, f64), o: &PlannedObject) -> BoundingBox {
    BoundingBox::from_center(center.0 + o.offset.0, center.1 + o.offset.1, o.size.0, o.size.1).clamped()
}

fn render_annotation(video: &str, t: usize, plan: &VideoPlan, vocab: &Vocabulary) -> FrameAnnotation {
    let step = t as f64;
    let center = (
        (plan.person_center.0 + plan.velocity.0 * step).clamp(0.3, 0.7),
        (plan.person_center.1 + plan.velocity.1 * step).clamp(0.3, 0.7),
    );
    let mut entities = vec![Entity {
        class: 0,
        bbox: BoundingBox::from_center(center.0, center.1, plan.person_size.0, plan.person_size.1).clamped(),
    }];
    let mut relations = Vec::with_capacity(plan.objects.len());
    for (k, o) in plan.objects.iter().enumerate() {
        entities.push(Entity {
            class: o.class,
            bbox: object_box(center, o),
        });
        let mut predicates: [Vec<usize>; 3] = Default::default();
        predicates[vocab.group_of(o.predicate)].push(o.predicate);
        relations.push(Relation {
            subject: 0,
            object: k + 1,
            predicates,
        });
    }
    FrameAnnotation {
        video: video.to_string(),
        frame: t,
        entities,
        relations,
    }
}

/// Per-class coverage of each grid cell, capped at 1.
fn render_grid(a: &FrameAnnotation, cfg: &SyntheticConfig) -> FrameFeatures {
    let g = cfg.grid;
    let c = cfg.object_classes;
    let cell = 1.0 / g as f64;
    let mut cells = vec![0.0; g * g * c];
    for e in &a.entities {
        for row in 0..g {
            for col in 0..g {
                let r = BoundingBox::raw(
                    col as f64 * cell,
                    row as f64 * cell,
                    (col + 1) as f64 * cell,
                    (row + 1) as f64 * cell,
                );
                let cover = e.bbox.intersection_area(&r) / (cell * cell);
                let v = &mut cells[(row * g + col) * c + e.class];
                *v = (*v + cover).min(1.0);
            }
        }
    }
    FrameFeatures {
        video: a.video.clone(),
        frame: a.frame,
        grid: g,
        channels: c,
        cells,
    }
}

fn other(rng: &mut ChaCha8Rng, range: std::ops::Range<usize>, current: usize) -> usize {
    if range.len() < 2 {
        return current;
    }
    let pick = rng.random_range(range.start..range.end - 1);
    if pick >= current {
        pick + 1
    } else {
        pick
    }
}

fn jitter(rng: &mut ChaCha8Rng, b: &BoundingBox) -> BoundingBox {
    let mut v = b.to_array();
    for x in &mut v {
        *x = (*x + rng.random_range(-BOX_JITTER..BOX_JITTER)).clamp(0.0, 1.0);
    }
    BoundingBox::raw(v[0].min(v[2]), v[1].min(v[3]), v[0].max(v[2]), v[1].max(v[3]))
}

/// Oracle cues: one per ground-truth relation, each field perturbed
/// independently with probability `cue_noise`, then sorted by confidence.
fn make_cues(a: &FrameAnnotation, cfg: &SyntheticConfig, vocab: &Vocabulary, rng: &mut ChaCha8Rng) -> FrameCues {
    let r = cfg.cue_noise;
    let mut cues = Vec::with_capacity(a.relations.len());
    for rel in &a.relations {
        let (s, o) = (&a.entities[rel.subject], &a.entities[rel.object]);
        let pred = rel.all_predicates().next().expect("one predicate per relation");
        let mut flips = 0;
        let mut flip = |rng: &mut ChaCha8Rng| {
            let hit = r > 0.0 && rng.random::<f64>() < r;
            flips += hit as usize;
            hit
        };
        let subject = if flip(rng) { other(rng, 0..vocab.object_count(), s.class) } else { s.class };
        let object = if flip(rng) { other(rng, 0..vocab.object_count(), o.class) } else { o.class };
        let predicate = if flip(rng) { other(rng, 0..vocab.predicate_count(), pred) } else { pred };
        let (sb, ob) = if flip(rng) {
            (jitter(rng, &s.bbox), jitter(rng, &o.bbox))
        } else {
            (s.bbox, o.bbox)
        };
        let confidence = if r > 0.0 {
            (1.0 - 0.15 * flips as f64 - rng.random_range(0.0..0.05)).max(0.0)
        } else {
            1.0
        };
        cues.push(Cue {
            subject: vocab.object_label(subject).to_string(),
            object: vocab.object_label(object).to_string(),
            predicates: vec![vocab.predicate_label(predicate).to_string()],
            subject_box: sb.to_array(),
            object_box: ob.to_array(),
            confidence,
        });
    }
    cues.sort_by(|x, y| y.confidence.total_cmp(&x.confidence));
    FrameCues {
        video: a.video.clone(),
        frame: a.frame,
        width: 1.0,
        height: 1.0,
        cues,
    }
}
