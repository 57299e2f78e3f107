//! Recall@K and mean Recall@K under the three evaluation modes, with and
//! without the one-predicate-per-pair constraint.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{FrameAnnotation, GtTriplet, Vocabulary};
use crate::error::{Result, SggError};
use crate::geometry::{iou, BoundingBox};
use crate::losses::LossWeights;
use crate::matcher::{match_predictions, relation_targets};
use crate::model::TripletPredictionSet;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    PredCls,
    SgCls,
    SgDet,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::PredCls, Mode::SgCls, Mode::SgDet];
}

impl FromStr for Mode {
    type Err = SggError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "predcls" => Ok(Mode::PredCls),
            "sgcls" => Ok(Mode::SgCls),
            "sgdet" => Ok(Mode::SgDet),
            other => Err(SggError::Config(format!(
                "unknown mode `{other}` (expected predcls, sgcls or sgdet)"
            ))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::PredCls => "predcls",
            Mode::SgCls => "sgcls",
            Mode::SgDet => "sgdet",
        })
    }
}

/// Whether the one-predicate limit applies per pair or per (pair, group).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintScope {
    Global,
    PerGroup,
}

impl FromStr for ConstraintScope {
    type Err = SggError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(ConstraintScope::Global),
            "per_group" => Ok(ConstraintScope::PerGroup),
            other => Err(SggError::Config(format!(
                "constraint scope must be global or per_group, got `{other}`"
            ))),
        }
    }
}

impl fmt::Display for ConstraintScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintScope::Global => "global",
            ConstraintScope::PerGroup => "per_group",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredTriplet {
    /// Query index (sgcls/sgdet) or ground-truth pair index (predcls).
    pub pair: usize,
    pub subject_class: usize,
    pub subject_box: BoundingBox,
    pub subject_conf: f64,
    pub object_class: usize,
    pub object_box: BoundingBox,
    pub object_conf: f64,
    pub predicate: usize,
    pub predicate_conf: f64,
    pub score: f64,
}

/// Most likely real class (no-object excluded) and its probability; ties go
/// to the lower class id.
fn best_class(probs: &[f64]) -> (usize, f64) {
    let real = &probs[..probs.len() - 1];
    let mut best = (0, real[0]);
    for (c, &p) in real.iter().enumerate().skip(1) {
        if p > best.1 {
            best = (c, p);
        }
    }
    best
}

fn expand(
    out: &mut Vec<ScoredTriplet>,
    preds: &TripletPredictionSet,
    query: usize,
    pair: usize,
    subject: (usize, BoundingBox, f64),
    object: (usize, BoundingBox, f64),
) {
    for (p, pc) in preds.predicate_row(query).into_iter().enumerate() {
        out.push(ScoredTriplet {
            pair,
            subject_class: subject.0,
            subject_box: subject.1,
            subject_conf: subject.2,
            object_class: object.0,
            object_box: object.1,
            object_conf: object.2,
            predicate: p,
            predicate_conf: pc,
            score: subject.2 * object.2 * pc,
        });
    }
}

/// Expands predictions into scored candidates, one per (pair, predicate).
///
/// In predcls and sgcls each ground-truth pair is served by the query it is
/// assigned to by the Hungarian matcher: on boxes and classes in predcls, on
/// boxes alone in sgcls.
pub fn enumerate_candidates(
    preds: &TripletPredictionSet,
    annotation: &FrameAnnotation,
    mode: Mode,
) -> Result<Vec<ScoredTriplet>> {
    let mut out = Vec::new();
    match mode {
        Mode::SgDet => {
            for q in 0..preds.len() {
                let (sc, sp) = best_class(preds.sub_probs.row(q));
                let (oc, op) = best_class(preds.obj_probs.row(q));
                expand(
                    &mut out,
                    preds,
                    q,
                    q,
                    (sc, preds.sub_boxes[q], sp),
                    (oc, preds.obj_boxes[q], op),
                );
            }
        }
        Mode::PredCls | Mode::SgCls => {
            let targets = relation_targets(annotation, preds.predicate_classes());
            let w = LossWeights {
                alpha_pred: 0.0,
                alpha_sub: if mode == Mode::PredCls { 1.0 } else { 0.0 },
                alpha_obj: if mode == Mode::PredCls { 1.0 } else { 0.0 },
                ..LossWeights::default()
            };
            let m = match_predictions(&targets, preds, &w)?;
            for (pair, (t, &q)) in targets.iter().zip(&m.assignment).enumerate() {
                let (subject, object) = if mode == Mode::PredCls {
                    ((t.subject_class, 1.0), (t.object_class, 1.0))
                } else {
                    (best_class(preds.sub_probs.row(q)), best_class(preds.obj_probs.row(q)))
                };
                expand(
                    &mut out,
                    preds,
                    q,
                    pair,
                    (subject.0, t.subject_box, subject.1),
                    (object.0, t.object_box, object.1),
                );
            }
        }
    }
    Ok(out)
}

/// Ranking order: score descending, then pair, then predicate id.
pub fn rank_order(a: &ScoredTriplet, b: &ScoredTriplet) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.pair.cmp(&b.pair))
        .then(a.predicate.cmp(&b.predicate))
}

/// Keeps the single best predicate per pair (or per pair and group).
/// Survivors keep their input order.
pub fn filter_with_constraint(
    candidates: &[ScoredTriplet],
    scope: ConstraintScope,
    vocab: &Vocabulary,
) -> Vec<ScoredTriplet> {
    let key = |c: &ScoredTriplet| match scope {
        ConstraintScope::Global => (c.pair, 0),
        ConstraintScope::PerGroup => (c.pair, vocab.group_of(c.predicate)),
    };
    let mut best: HashMap<(usize, usize), usize> = HashMap::new();
    for (i, c) in candidates.iter().enumerate() {
        best.entry(key(c))
            .and_modify(|b| {
                if rank_order(c, &candidates[*b]).is_lt() {
                    *b = i;
                }
            })
            .or_insert(i);
    }
    let mut keep: Vec<usize> = best.into_values().collect();
    keep.sort_unstable();
    keep.into_iter().map(|i| candidates[i].clone()).collect()
}

fn matches(c: &ScoredTriplet, g: &GtTriplet, mode: Mode, iou_threshold: f64) -> bool {
    c.subject_class == g.subject_class
        && c.object_class == g.object_class
        && c.predicate == g.predicate
        && (mode != Mode::SgDet
            || (iou(&c.subject_box, &g.subject_box) >= iou_threshold
                && iou(&c.object_box, &g.object_box) >= iou_threshold))
}

/// Which ground-truth triplets the top-`k` candidates recover. Candidates
/// are visited in rank order; each takes the first still-unmatched
/// ground truth it matches.
pub fn matched_ground_truth(
    candidates: &[ScoredTriplet],
    gts: &[GtTriplet],
    k: usize,
    mode: Mode,
    iou_threshold: f64,
) -> Result<Vec<bool>> {
    if k == 0 {
        return Err(SggError::Config("K must be at least 1".into()));
    }
    let mut ranked: Vec<&ScoredTriplet> = candidates.iter().collect();
    ranked.sort_by(|a, b| rank_order(a, b));
    let mut hit = vec![false; gts.len()];
    for c in ranked.into_iter().take(k) {
        if let Some(g) = (0..gts.len()).find(|&g| !hit[g] && matches(c, &gts[g], mode, iou_threshold)) {
            hit[g] = true;
        }
    }
    Ok(hit)
}

/// Fraction of ground-truth triplets recovered; an empty ground truth has
/// recall 1.
pub fn recall_at_k(
    candidates: &[ScoredTriplet],
    gts: &[GtTriplet],
    k: usize,
    mode: Mode,
    iou_threshold: f64,
) -> Result<f64> {
    let hit = matched_ground_truth(candidates, gts, k, mode, iou_threshold)?;
    if gts.is_empty() {
        return Ok(1.0);
    }
    Ok(hit.iter().filter(|&&h| h).count() as f64 / gts.len() as f64)
}

/// One frame's candidates and ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameCandidates {
    pub candidates: Vec<ScoredTriplet>,
    pub gts: Vec<GtTriplet>,
}

/// Recall averaged over frames with nonempty ground truth, or `None` when
/// no such frame exists.
pub fn frame_averaged_recall(
    frames: &[FrameCandidates],
    k: usize,
    mode: Mode,
    iou_threshold: f64,
) -> Result<Option<f64>> {
    let mut sum = 0.0;
    let mut count = 0;
    for f in frames {
        let r = recall_at_k(&f.candidates, &f.gts, k, mode, iou_threshold)?;
        if !f.gts.is_empty() {
            sum += r;
            count += 1;
        }
    }
    Ok((count > 0).then(|| sum / count as f64))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeanRecall {
    /// Per predicate id: recall over all its ground-truth instances, or
    /// `None` without support.
    pub per_predicate: Vec<Option<f64>>,
    pub support: Vec<usize>,
    /// Unweighted mean over predicates with support.
    pub mean: Option<f64>,
}

pub fn mean_recall_at_k(
    frames: &[FrameCandidates],
    k: usize,
    mode: Mode,
    iou_threshold: f64,
    predicate_classes: usize,
) -> Result<MeanRecall> {
    let mut hits = vec![0usize; predicate_classes];
    let mut support = vec![0usize; predicate_classes];
    for f in frames {
        let hit = matched_ground_truth(&f.candidates, &f.gts, k, mode, iou_threshold)?;
        for (g, h) in f.gts.iter().zip(hit) {
            support[g.predicate] += 1;
            hits[g.predicate] += h as usize;
        }
    }
    let per_predicate: Vec<Option<f64>> = hits
        .iter()
        .zip(&support)
        .map(|(&h, &s)| (s > 0).then(|| h as f64 / s as f64))
        .collect();
    let supported: Vec<f64> = per_predicate.iter().flatten().copied().collect();
    let mean = (!supported.is_empty()).then(|| supported.iter().sum::<f64>() / supported.len() as f64);
    Ok(MeanRecall {
        per_predicate,
        support,
        mean,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecallEntry {
    pub mode: Mode,
    pub constraint: bool,
    pub k: usize,
    pub recall: Option<f64>,
    pub mean_recall: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredicateEntry {
    pub mode: Mode,
    pub constraint: bool,
    pub k: usize,
    pub predicate: String,
    pub recall: Option<f64>,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frames: usize,
    pub iou_threshold: f64,
    pub constraint_scope: ConstraintScope,
    pub entries: Vec<RecallEntry>,
    pub per_predicate: Vec<PredicateEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSettings {
    pub modes: Vec<Mode>,
    /// Constraint settings to report: `true` is with-constraint.
    pub constraints: Vec<bool>,
    pub ks: Vec<usize>,
    pub scope: ConstraintScope,
    pub iou_threshold: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            modes: Mode::ALL.to_vec(),
            constraints: vec![true, false],
            ks: vec![10, 20, 50],
            scope: ConstraintScope::Global,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
        }
    }
}

/// Runs enumerate, filter and recall over all frames for every requested
/// (mode, constraint, K).
pub fn evaluate(
    frames: &[(TripletPredictionSet, FrameAnnotation)],
    vocab: &Vocabulary,
    settings: &EvalSettings,
) -> Result<MetricsReport> {
    let mut entries = Vec::new();
    let mut per_predicate = Vec::new();
    for &mode in &settings.modes {
        let raw: Vec<FrameCandidates> = frames
            .iter()
            .map(|(p, a)| {
                Ok(FrameCandidates {
                    candidates: enumerate_candidates(p, a, mode)?,
                    gts: a.triplets(),
                })
            })
            .collect::<Result<_>>()?;
        for &constraint in &settings.constraints {
            let set: Vec<FrameCandidates> = if constraint {
                raw.iter()
                    .map(|f| FrameCandidates {
                        candidates: filter_with_constraint(&f.candidates, settings.scope, vocab),
                        gts: f.gts.clone(),
                    })
                    .collect()
            } else {
                raw.clone()
            };
            for &k in &settings.ks {
                let recall = frame_averaged_recall(&set, k, mode, settings.iou_threshold)?;
                let mr = mean_recall_at_k(&set, k, mode, settings.iou_threshold, vocab.predicate_count())?;
                entries.push(RecallEntry {
                    mode,
                    constraint,
                    k,
                    recall,
                    mean_recall: mr.mean,
                });
                for (p, (r, s)) in mr.per_predicate.iter().zip(&mr.support).enumerate() {
                    per_predicate.push(PredicateEntry {
                        mode,
                        constraint,
                        k,
                        predicate: vocab.predicate_label(p).to_string(),
                        recall: *r,
                        support: *s,
                    });
                }
            }
        }
    }
    Ok(MetricsReport {
        frames: frames.len(),
        iou_threshold: settings.iou_threshold,
        constraint_scope: settings.scope,
        entries,
        per_predicate,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

impl MetricsReport {
    pub fn entry(&self, mode: Mode, constraint: bool, k: usize) -> Option<&RecallEntry> {
        self.entries
            .iter()
            .find(|e| e.mode == mode && e.constraint == constraint && e.k == k)
    }

    /// Aligned text table, one row per (mode, constraint, K).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "frames: {}  iou_threshold: {}  constraint_scope: {}",
            self.frames, self.iou_threshold, self.constraint_scope
        );
        let _ = writeln!(s, "{:<8} {:<10} {:>4} {:>8} {:>8}", "mode", "constraint", "K", "R@K", "mR@K");
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{:<8} {:<10} {:>4} {:>8} {:>8}",
                e.mode.to_string(),
                if e.constraint { "with" } else { "no" },
                e.k,
                fmt_opt(e.recall),
                fmt_opt(e.mean_recall)
            );
        }
        s
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Per-predicate recall table for plotting.
    pub fn plot_csv(&self) -> String {
        let mut s = String::from("mode,constraint,k,predicate,recall,support\n");
        for p in &self.per_predicate {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                p.mode,
                if p.constraint { "with" } else { "no" },
                p.k,
                p.predicate,
                p.recall.map_or_else(String::new, |r| format!("{r:.6}")),
                p.support
            );
        }
        s
    }
}
