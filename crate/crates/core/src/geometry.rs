//! Axis-aligned boxes in normalized corner form.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SggError};

/// Corner-form box `(x1, y1, x2, y2)` with coordinates in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", try_from = "[f64; 4]")]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.to_array()
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = String;

    fn try_from(a: [f64; 4]) -> std::result::Result<Self, Self::Error> {
        BoundingBox::new(a[0], a[1], a[2], a[3]).map_err(|e| e.to_string())
    }
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = BoundingBox { x1, y1, x2, y2 };
        b.validate()?;
        Ok(b)
    }

    /// Builds a box without range checks. Used for un-normalized geometry
    /// (pixel units) where only `x1 <= x2, y1 <= y2` matters.
    pub const fn raw(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BoundingBox { x1, y1, x2, y2 }
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.to_array();
        if a.iter().any(|v| !v.is_finite() || !(0.0..=1.0).contains(v)) {
            return Err(SggError::Consistency(format!(
                "box {a:?} has coordinates outside [0, 1]"
            )));
        }
        if self.x1 > self.x2 || self.y1 > self.y2 {
            return Err(SggError::Consistency(format!(
                "box {a:?} has inverted corners"
            )));
        }
        Ok(())
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BoundingBox::raw(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    /// Smallest box containing both.
    pub fn hull(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox::raw(
            self.x1.min(other.x1),
            self.y1.min(other.y1),
            self.x2.max(other.x2),
            self.y2.max(other.y2),
        )
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BoundingBox {
        BoundingBox::raw(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)
    }

    pub fn scale(&self, s: f64) -> BoundingBox {
        BoundingBox::raw(self.x1 * s, self.y1 * s, self.x2 * s, self.y2 * s)
    }

    /// Clamps every coordinate into `[0, 1]`.
    pub fn clamped(&self) -> BoundingBox {
        let c = |v: f64| v.clamp(0.0, 1.0);
        BoundingBox::raw(c(self.x1), c(self.y1), c(self.x2), c(self.y2))
    }
}

/// Intersection over union. When the hull has zero area the boxes are
/// either the same degenerate box (IoU 1) or disjoint degenerate boxes (0).
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let hull = a.hull(b).area();
    if hull == 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union == 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Generalized IoU: `IoU - (hull - union) / hull`.
pub fn giou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let hull = a.hull(b).area();
    if hull == 0.0 {
        return iou(a, b);
    }
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    let iou = if union == 0.0 { 0.0 } else { inter / union };
    iou - (hull - union) / hull
}

pub fn giou_loss(a: &BoundingBox, b: &BoundingBox) -> f64 {
    1.0 - giou(a, b)
}

/// Mean absolute coordinate difference.
pub fn l1_box(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.to_array()
        .iter()
        .zip(b.to_array())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / 4.0
}
