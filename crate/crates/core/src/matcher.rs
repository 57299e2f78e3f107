//! One-to-one assignment between ground-truth relations and predicted
//! triplets, the composite matching cost and the training loss.

use crate::autodiff::{Tape, Var};
use crate::data::FrameAnnotation;
use crate::error::{Result, SggError};
use crate::geometry::{giou_loss, l1_box, BoundingBox};
use crate::losses::{box_losses_on_tape, cross_entropy_from_probs, focal_loss, focal_on_tape, LossWeights};
use crate::model::{HeadOutputs, TripletPredictionSet};
use crate::tensor::Tensor2;

/// Optimal assignment of rows to distinct columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// Column chosen for each row.
    pub columns: Vec<usize>,
    /// Sum of selected entries, accumulated in row order.
    pub total: f64,
}

/// Minimum-cost assignment of each row to a distinct column (`n ≤ m`).
/// Among optimal assignments the lexicographically smallest column
/// sequence is returned.
pub fn hungarian(cost: &Tensor2) -> Result<Assignment> {
    let (n, m) = cost.shape();
    if n > m {
        return Err(SggError::Capacity {
            what: "assignment rows",
            got: n,
            limit: m,
        });
    }
    if !cost.is_finite() {
        return Err(SggError::NonFinite {
            context: "assignment cost matrix".into(),
        });
    }
    if n == 0 {
        return Ok(Assignment {
            columns: Vec::new(),
            total: 0.0,
        });
    }
    let rows: Vec<usize> = (0..n).collect();
    let cols: Vec<usize> = (0..m).collect();
    let (best, _) = solve(cost, &rows, &cols);
    let tol = 1e-9 * (1.0 + best.abs());

    let mut chosen = Vec::with_capacity(n);
    let mut used = vec![false; m];
    let mut prefix = 0.0;
    for i in 0..n {
        let rest_rows: Vec<usize> = (i + 1..n).collect();
        let mut picked = None;
        for c in 0..m {
            if used[c] {
                continue;
            }
            let rest_cols: Vec<usize> = (0..m).filter(|&k| !used[k] && k != c).collect();
            let (rest, _) = solve(cost, &rest_rows, &rest_cols);
            if prefix + cost.get(i, c) + rest <= best + tol {
                picked = Some(c);
                break;
            }
        }
        let c = picked.expect("an optimal completion always exists");
        used[c] = true;
        prefix += cost.get(i, c);
        chosen.push(c);
    }
    let total = chosen.iter().enumerate().map(|(i, &c)| cost.get(i, c)).sum();
    Ok(Assignment { columns: chosen, total })
}

/// Shortest-augmenting-path solver on the sub-matrix selected by `rows` and
/// `cols`; returns the optimum and one optimal column per row.
fn solve(cost: &Tensor2, rows: &[usize], cols: &[usize]) -> (f64, Vec<usize>) {
    let (n, m) = (rows.len(), cols.len());
    if n == 0 {
        return (0.0, Vec::new());
    }
    let a = |i: usize, j: usize| cost.get(rows[i - 1], cols[j - 1]);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut done = vec![false; m + 1];
        loop {
            done[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !done[j] {
                    let cur = a(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if done[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    let total = assign.iter().enumerate().map(|(i, &j)| a(i + 1, j + 1)).sum();
    (total, assign.into_iter().map(|j| cols[j]).collect())
}

/// A ground-truth relation as a matching target.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationTarget {
    pub subject_class: usize,
    pub subject_box: BoundingBox,
    pub object_class: usize,
    pub object_box: BoundingBox,
    /// Multi-hot over global predicate ids.
    pub predicates: Vec<bool>,
}

pub fn relation_targets(a: &FrameAnnotation, predicate_classes: usize) -> Vec<RelationTarget> {
    a.relations
        .iter()
        .map(|r| {
            let (s, o) = (&a.entities[r.subject], &a.entities[r.object]);
            let mut hot = vec![false; predicate_classes];
            for p in r.all_predicates() {
                hot[p] = true;
            }
            RelationTarget {
                subject_class: s.class,
                subject_box: s.bbox,
                object_class: o.class,
                object_box: o.bbox,
                predicates: hot,
            }
        })
        .collect()
}

/// Weighted cost terms of matching one target to one prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CostTerms {
    pub sub_cls: f64,
    pub obj_cls: f64,
    pub predicate: f64,
    pub box_l1: f64,
    pub box_giou: f64,
}

impl CostTerms {
    pub fn total(&self) -> f64 {
        self.sub_cls + self.obj_cls + self.predicate + self.box_l1 + self.box_giou
    }
}

pub fn cost_terms(t: &RelationTarget, preds: &TripletPredictionSet, i: usize, w: &LossWeights) -> CostTerms {
    CostTerms {
        sub_cls: w.alpha_sub * cross_entropy_from_probs(preds.sub_probs.row(i), t.subject_class),
        obj_cls: w.alpha_obj * cross_entropy_from_probs(preds.obj_probs.row(i), t.object_class),
        predicate: w.alpha_pred * focal_loss(&preds.predicate_row(i), &t.predicates, w.focal_alpha, w.focal_gamma),
        box_l1: w.beta
            * w.lambda_l1
            * (l1_box(&preds.sub_boxes[i], &t.subject_box) + l1_box(&preds.obj_boxes[i], &t.object_box)),
        box_giou: w.beta
            * w.lambda_giou
            * (giou_loss(&preds.sub_boxes[i], &t.subject_box) + giou_loss(&preds.obj_boxes[i], &t.object_box)),
    }
}

/// Composite cost of assigning prediction `i` to target `t`.
pub fn matching_cost(t: &RelationTarget, preds: &TripletPredictionSet, i: usize, w: &LossWeights) -> f64 {
    cost_terms(t, preds, i, w).total()
}

pub fn cost_matrix(targets: &[RelationTarget], preds: &TripletPredictionSet, w: &LossWeights) -> Tensor2 {
    Tensor2::from_fn(targets.len(), preds.len(), |g, i| matching_cost(&targets[g], preds, i, w))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    /// Prediction index assigned to each target.
    pub assignment: Vec<usize>,
    pub costs: Vec<f64>,
    pub total: f64,
}

impl MatchResult {
    /// Target matched to each prediction, if any.
    pub fn target_of(&self, predictions: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; predictions];
        for (g, &i) in self.assignment.iter().enumerate() {
            out[i] = Some(g);
        }
        out
    }
}

pub fn match_predictions(
    targets: &[RelationTarget],
    preds: &TripletPredictionSet,
    w: &LossWeights,
) -> Result<MatchResult> {
    if targets.len() > preds.len() {
        return Err(SggError::Capacity {
            what: "ground-truth relations per frame",
            got: targets.len(),
            limit: preds.len(),
        });
    }
    let cost = cost_matrix(targets, preds, w);
    let a = hungarian(&cost)?;
    let costs = a.columns.iter().enumerate().map(|(g, &i)| cost.get(g, i)).collect();
    Ok(MatchResult {
        assignment: a.columns,
        costs,
        total: a.total,
    })
}

/// Weighted loss components summed over one frame.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub sub_cls: f64,
    pub obj_cls: f64,
    pub predicate: f64,
    pub box_l1: f64,
    pub box_giou: f64,
    pub no_object: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.sub_cls + self.obj_cls + self.predicate + self.box_l1 + self.box_giou + self.no_object
    }

    pub fn add(&mut self, o: &LossBreakdown) {
        self.sub_cls += o.sub_cls;
        self.obj_cls += o.obj_cls;
        self.predicate += o.predicate;
        self.box_l1 += o.box_l1;
        self.box_giou += o.box_giou;
        self.no_object += o.no_object;
    }

    pub fn scaled(&self, k: f64) -> LossBreakdown {
        LossBreakdown {
            sub_cls: self.sub_cls * k,
            obj_cls: self.obj_cls * k,
            predicate: self.predicate * k,
            box_l1: self.box_l1 * k,
            box_giou: self.box_giou * k,
            no_object: self.no_object * k,
        }
    }
}

/// Matched predictions contribute the full composite cost; unmatched ones
/// contribute no-object cross-entropy on both class heads.
pub fn total_loss(
    preds: &TripletPredictionSet,
    annotation: &FrameAnnotation,
    w: &LossWeights,
) -> Result<(LossBreakdown, MatchResult)> {
    let targets = relation_targets(annotation, preds.predicate_classes());
    let m = match_predictions(&targets, preds, w)?;
    let mut b = LossBreakdown::default();
    for (g, &i) in m.assignment.iter().enumerate() {
        let t = cost_terms(&targets[g], preds, i, w);
        b.sub_cls += t.sub_cls;
        b.obj_cls += t.obj_cls;
        b.predicate += t.predicate;
        b.box_l1 += t.box_l1;
        b.box_giou += t.box_giou;
    }
    let none = preds.sub_probs.cols() - 1;
    for (i, target) in m.target_of(preds.len()).iter().enumerate() {
        if target.is_none() {
            b.no_object += w.no_object_weight
                * (cross_entropy_from_probs(preds.sub_probs.row(i), none)
                    + cross_entropy_from_probs(preds.obj_probs.row(i), none));
        }
    }
    Ok((b, m))
}

/// Tape handles of each loss component.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub sub_cls: Var,
    pub obj_cls: Var,
    pub predicate: Var,
    pub box_l1: Var,
    pub box_giou: Var,
    pub no_object: Var,
}

impl LossVars {
    pub fn breakdown(&self, tape: &Tape) -> LossBreakdown {
        LossBreakdown {
            sub_cls: tape.scalar_value(self.sub_cls),
            obj_cls: tape.scalar_value(self.obj_cls),
            predicate: tape.scalar_value(self.predicate),
            box_l1: tape.scalar_value(self.box_l1),
            box_giou: tape.scalar_value(self.box_giou),
            no_object: tape.scalar_value(self.no_object),
        }
    }
}

/// Records the loss for a fixed assignment.
pub fn loss_on_tape(
    tape: &mut Tape,
    out: &HeadOutputs,
    targets: &[RelationTarget],
    matching: &MatchResult,
    w: &LossWeights,
) -> LossVars {
    let (n, classes) = tape.value(out.sub_logits).shape();
    let none = classes - 1;
    let target_of = matching.target_of(n);

    let class_terms = |tape: &mut Tape, logits: Var, class_of: &dyn Fn(&RelationTarget) -> usize, alpha: f64| {
        let matched = Tensor2::from_fn(n, classes, |i, c| match target_of[i] {
            Some(g) if class_of(&targets[g]) == c => -alpha,
            _ => 0.0,
        });
        let unmatched = Tensor2::from_fn(n, classes, |i, c| {
            if target_of[i].is_none() && c == none {
                -w.no_object_weight
            } else {
                0.0
            }
        });
        let ls = tape.log_softmax_rows(logits);
        let mm = tape.constant(matched);
        let um = tape.constant(unmatched);
        let a = tape.mul(ls, mm);
        let b = tape.mul(ls, um);
        (tape.sum(a), tape.sum(b))
    };
    let (sub_cls, sub_none) = class_terms(tape, out.sub_logits, &|t| t.subject_class, w.alpha_sub);
    let (obj_cls, obj_none) = class_terms(tape, out.obj_logits, &|t| t.object_class, w.alpha_obj);
    let no_object = tape.add(sub_none, obj_none);

    let p = tape.value(out.pred_logits).cols();
    let hot = Tensor2::from_fn(n, p, |i, c| match target_of[i] {
        Some(g) if targets[g].predicates[c] => 1.0,
        _ => 0.0,
    });
    let mask: Vec<bool> = target_of.iter().map(Option::is_some).collect();
    let focal = focal_on_tape(tape, out.pred_logits, &hot, &mask, w.focal_alpha, w.focal_gamma);
    let predicate = tape.scale(focal, w.alpha_pred);

    let rows = &matching.assignment;
    let gt = |f: &dyn Fn(&RelationTarget) -> BoundingBox| {
        Tensor2::from_fn(rows.len(), 4, |g, c| f(&targets[g]).to_array()[c])
    };
    let (box_l1, box_giou) = if rows.is_empty() {
        let z = tape.constant(Tensor2::scalar(0.0));
        (z, z)
    } else {
        let sp = tape.gather_rows(out.sub_boxes, rows);
        let op = tape.gather_rows(out.obj_boxes, rows);
        let (sl1, sg) = box_losses_on_tape(tape, sp, &gt(&|t| t.subject_box));
        let (ol1, og) = box_losses_on_tape(tape, op, &gt(&|t| t.object_box));
        let l1 = tape.add(sl1, ol1);
        let g = tape.add(sg, og);
        (tape.scale(l1, w.beta * w.lambda_l1), tape.scale(g, w.beta * w.lambda_giou))
    };

    let t = tape.add(sub_cls, obj_cls);
    let t = tape.add(t, predicate);
    let t = tape.add(t, box_l1);
    let t = tape.add(t, box_giou);
    let total = tape.add(t, no_object);
    LossVars {
        total,
        sub_cls,
        obj_cls,
        predicate,
        box_l1,
        box_giou,
        no_object,
    }
}
