//! Classification and box-regression losses, in plain form and as recorded
//! tape expressions.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Result, SggError};
use crate::tensor::{self, Tensor2};

/// Weights of the matching cost / training loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha_sub: f64,
    pub alpha_obj: f64,
    pub alpha_pred: f64,
    pub beta: f64,
    pub lambda_l1: f64,
    pub lambda_giou: f64,
    pub focal_gamma: f64,
    pub focal_alpha: f64,
    pub no_object_weight: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha_sub: 1.0,
            alpha_obj: 1.0,
            alpha_pred: 1.0,
            beta: 1.0,
            lambda_l1: 5.0,
            lambda_giou: 2.0,
            focal_gamma: 2.0,
            focal_alpha: 0.25,
            no_object_weight: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("alpha_sub", self.alpha_sub),
            ("alpha_obj", self.alpha_obj),
            ("alpha_pred", self.alpha_pred),
            ("beta", self.beta),
            ("lambda_l1", self.lambda_l1),
            ("lambda_giou", self.lambda_giou),
            ("focal_gamma", self.focal_gamma),
            ("focal_alpha", self.focal_alpha),
            ("no_object_weight", self.no_object_weight),
        ];
        for (name, v) in all {
            if !v.is_finite() || v < 0.0 {
                return Err(SggError::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

/// `-w[target] * log softmax(logits)[target]`
pub fn cross_entropy(logits: &[f64], target: usize, class_weights: Option<&[f64]>) -> Result<f64> {
    if logits.len() < 2 {
        return Err(SggError::dim("cross_entropy", "need at least two classes"));
    }
    if target >= logits.len() {
        return Err(SggError::Index {
            what: "class logits",
            index: target,
            len: logits.len(),
        });
    }
    let w = match class_weights {
        Some(ws) if ws.len() != logits.len() => {
            return Err(SggError::dim("cross_entropy", "class weight count differs from logits"))
        }
        Some(ws) => ws[target],
        None => 1.0,
    };
    let mut row = logits.to_vec();
    tensor::log_softmax_in_place(&mut row);
    Ok(-w * row[target])
}

/// Cross-entropy from an already normalized distribution.
pub fn cross_entropy_from_probs(probs: &[f64], target: usize) -> f64 {
    -probs[target].max(FOCAL_EPS).ln()
}

pub const FOCAL_EPS: f64 = 1e-12;

/// Multi-label focal loss summed over classes:
/// `-alpha * (1 - p_t)^gamma * ln(p_t)` with `p_t = p` for positives and
/// `1 - p` for negatives. `p_t` is clamped to `[eps, 1 - eps]` inside the log.
pub fn focal_loss(probs: &[f64], targets: &[bool], alpha: f64, gamma: f64) -> f64 {
    debug_assert_eq!(probs.len(), targets.len());
    probs
        .iter()
        .zip(targets)
        .map(|(&p, &t)| {
            let pt = if t { p } else { 1.0 - p };
            let log_pt = pt.clamp(FOCAL_EPS, 1.0 - FOCAL_EPS).ln();
            -alpha * (1.0 - pt).powf(gamma) * log_pt
        })
        .sum()
}

/// Same loss evaluated from logits through `ln σ`, avoiding the clamp.
pub fn focal_loss_logits(logits: &[f64], targets: &[bool], alpha: f64, gamma: f64) -> f64 {
    logits
        .iter()
        .zip(targets)
        .map(|(&z, &t)| {
            let s = if t { z } else { -z };
            -alpha * tensor::sigmoid(-s).powf(gamma) * tensor::log_sigmoid(s)
        })
        .sum()
}

/// Binary cross-entropy summed over classes.
pub fn binary_cross_entropy(probs: &[f64], targets: &[bool]) -> f64 {
    probs
        .iter()
        .zip(targets)
        .map(|(&p, &t)| if t { -p.ln() } else { -(1.0 - p).ln() })
        .sum()
}

/// Focal loss over a block of logits on the tape. `targets` holds 0/1 and
/// `row_mask` selects which rows contribute.
pub fn focal_on_tape(
    tape: &mut Tape,
    logits: Var,
    targets: &Tensor2,
    row_mask: &[bool],
    alpha: f64,
    gamma: f64,
) -> Var {
    let (rows, cols) = tape.value(logits).shape();
    debug_assert_eq!(targets.shape(), (rows, cols));
    // s = +z for positives, -z for negatives; masked rows contribute 0.
    let sign = Tensor2::from_fn(rows, cols, |r, c| if targets.get(r, c) > 0.5 { 1.0 } else { -1.0 });
    let mask = Tensor2::from_fn(rows, cols, |r, _| if row_mask[r] { -alpha } else { 0.0 });
    let sign = tape.constant(sign);
    let mask = tape.constant(mask);
    let s = tape.mul(logits, sign);
    let log_pt = tape.log_sigmoid(s);
    let neg_s = tape.scale(s, -1.0);
    let one_minus_pt = tape.sigmoid(neg_s);
    let modulating = tape.powf(one_minus_pt, gamma);
    let term = tape.mul(modulating, log_pt);
    let weighted = tape.mul(term, mask);
    tape.sum(weighted)
}

/// Summed box losses for matched pairs on the tape: `(Σ L1, Σ (1 - GIoU))`
/// with L1 averaged over the four coordinates of each pair.
pub fn box_losses_on_tape(tape: &mut Tape, pred: Var, target: &Tensor2) -> (Var, Var) {
    let m = target.rows();
    debug_assert_eq!(tape.value(pred).shape(), (m, 4));
    let gt = tape.constant(target.clone());
    let diff = tape.sub(pred, gt);
    let abs = tape.abs(diff);
    let l1 = tape.sum(abs);
    let l1 = tape.scale(l1, 0.25);

    let col = |tape: &mut Tape, v: Var, c: usize| tape.slice_cols(v, c, 1);
    let (px1, py1, px2, py2) = (
        col(tape, pred, 0),
        col(tape, pred, 1),
        col(tape, pred, 2),
        col(tape, pred, 3),
    );
    let (gx1, gy1, gx2, gy2) = (
        col(tape, gt, 0),
        col(tape, gt, 1),
        col(tape, gt, 2),
        col(tape, gt, 3),
    );

    let ix1 = tape.max(px1, gx1);
    let iy1 = tape.max(py1, gy1);
    let ix2 = tape.min(px2, gx2);
    let iy2 = tape.min(py2, gy2);
    let iw = tape.sub(ix2, ix1);
    let iw = tape.relu(iw);
    let ih = tape.sub(iy2, iy1);
    let ih = tape.relu(ih);
    let inter = tape.mul(iw, ih);

    let pw = tape.sub(px2, px1);
    let ph = tape.sub(py2, py1);
    let pa = tape.mul(pw, ph);
    let gw = tape.sub(gx2, gx1);
    let gh = tape.sub(gy2, gy1);
    let ga = tape.mul(gw, gh);
    let sum_area = tape.add(pa, ga);
    let union = tape.sub(sum_area, inter);
    let iou = tape.div(inter, union);

    let hx1 = tape.min(px1, gx1);
    let hy1 = tape.min(py1, gy1);
    let hx2 = tape.max(px2, gx2);
    let hy2 = tape.max(py2, gy2);
    let hw = tape.sub(hx2, hx1);
    let hh = tape.sub(hy2, hy1);
    let hull = tape.mul(hw, hh);
    let gap = tape.sub(hull, union);
    let penalty = tape.div(gap, hull);
    let giou = tape.sub(iou, penalty);
    let giou_sum = tape.sum(giou);
    let neg = tape.scale(giou_sum, -1.0);
    let giou_loss = tape.add_scalar(neg, m as f64);
    (l1, giou_loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{giou_loss, l1_box, BoundingBox};

    #[test]
    fn cross_entropy_values() {
        let ce = cross_entropy(&[0.0; 4], 2, None).unwrap();
        assert!((ce - 4f64.ln()).abs() < 1e-12);
        assert!((ce - 1.386294).abs() < 1e-6);

        let confident = cross_entropy(&[40.0, 0.0, 0.0], 0, None).unwrap();
        assert!(confident < 1e-15);

        let w = [1.0, 1.0, 0.1];
        let plain = cross_entropy(&[0.2, -0.3, 0.9], 2, None).unwrap();
        let weighted = cross_entropy(&[0.2, -0.3, 0.9], 2, Some(&w)).unwrap();
        assert!((weighted - 0.1 * plain).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_errors() {
        assert!(matches!(
            cross_entropy(&[0.0, 0.0], 2, None),
            Err(SggError::Index { .. })
        ));
        assert!(cross_entropy(&[0.0], 0, None).is_err());
    }

    #[test]
    fn focal_values() {
        let v = focal_loss(&[0.5], &[true], 0.25, 2.0);
        assert!((v - 0.25 * 0.25 * 2f64.ln()).abs() < 1e-15);
        assert!((v - 0.0433217).abs() < 1e-7);
        assert_eq!(focal_loss(&[1.0, 0.0], &[true, false], 0.25, 2.0), 0.0);
    }

    #[test]
    fn focal_reduces_to_bce() {
        let p = [0.1, 0.55, 0.93, 0.4];
        let t = [true, false, true, false];
        assert!((focal_loss(&p, &t, 1.0, 0.0) - binary_cross_entropy(&p, &t)).abs() < 1e-12);
    }

    #[test]
    fn focal_monotone_for_positives() {
        let mut prev = f64::INFINITY;
        for i in 1..100 {
            let p = i as f64 / 100.0;
            let v = focal_loss(&[p], &[true], 0.25, 2.0);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn logit_form_matches_probability_form() {
        let z = [-2.0, 0.3, 1.7, 0.0];
        let t = [false, true, true, false];
        let p: Vec<f64> = z.iter().map(|&v| tensor::sigmoid(v)).collect();
        let a = focal_loss(&p, &t, 0.25, 2.0);
        let b = focal_loss_logits(&z, &t, 0.25, 2.0);
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn tape_losses_match_plain() {
        let preds = [
            BoundingBox::raw(0.1, 0.2, 0.4, 0.6),
            BoundingBox::raw(0.5, 0.5, 0.9, 0.7),
        ];
        let gts = [
            BoundingBox::raw(0.15, 0.1, 0.45, 0.5),
            BoundingBox::raw(0.0, 0.0, 0.2, 0.3),
        ];
        let mut tape = Tape::new();
        let p = tape.constant(Tensor2::from_rows(&preds.map(|b| b.to_array())).unwrap());
        let g = Tensor2::from_rows(&gts.map(|b| b.to_array())).unwrap();
        let (l1, gl) = box_losses_on_tape(&mut tape, p, &g);
        let expect_l1: f64 = preds.iter().zip(&gts).map(|(a, b)| l1_box(a, b)).sum();
        let expect_g: f64 = preds.iter().zip(&gts).map(|(a, b)| giou_loss(a, b)).sum();
        assert!((tape.scalar_value(l1) - expect_l1).abs() < 1e-14);
        assert!((tape.scalar_value(gl) - expect_g).abs() < 1e-14);

        let logits = Tensor2::from_rows(&[[0.3, -1.0, 2.0], [1.0, 1.0, -0.5]]).unwrap();
        let targets = Tensor2::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]]).unwrap();
        let z = tape.constant(logits.clone());
        let f = focal_on_tape(&mut tape, z, &targets, &[true, false], 0.25, 2.0);
        let expect = focal_loss_logits(logits.row(0), &[true, false, false], 0.25, 2.0);
        assert!((tape.scalar_value(f) - expect).abs() < 1e-14);
    }
}
