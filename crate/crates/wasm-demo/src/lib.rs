//! Browser bindings: box overlap, optimal assignment and synthetic scenes.

use serde_json::{json, Value};
use sgg_core::data::synthetic::{generate_synthetic, SyntheticConfig};
use sgg_core::geometry::{giou, iou, BoundingBox};
use sgg_core::matcher::hungarian;
use sgg_core::tensor::Tensor2;
use wasm_bindgen::prelude::*;

fn to_box(v: &[f64]) -> Result<BoundingBox, String> {
    match v {
        [x1, y1, x2, y2] if x1 <= x2 && y1 <= y2 => Ok(BoundingBox::raw(*x1, *y1, *x2, *y2)),
        [_, _, _, _] => Err("box corners must satisfy x1 <= x2 and y1 <= y2".into()),
        _ => Err(format!("a box needs 4 numbers, got {}", v.len())),
    }
}

/// `{iou, giou, hull}` of two `[x1, y1, x2, y2]` boxes.
pub fn overlap_json(a: &[f64], b: &[f64]) -> Result<String, String> {
    let (a, b) = (to_box(a)?, to_box(b)?);
    let h = a.hull(&b);
    Ok(json!({
        "iou": iou(&a, &b),
        "giou": giou(&a, &b),
        "hull": [h.x1, h.y1, h.x2, h.y2],
    })
    .to_string())
}

/// Minimum-cost assignment of a JSON matrix `[[..], ..]` with at most as
/// many rows as columns; returns `{columns, total}`.
pub fn assignment_json(matrix: &str) -> Result<String, String> {
    let rows: Vec<Vec<f64>> = serde_json::from_str(matrix).map_err(|e| format!("matrix: {e}"))?;
    let cost = Tensor2::from_rows(&rows).map_err(|e| e.to_string())?;
    let a = hungarian(&cost).map_err(|e| e.to_string())?;
    Ok(json!({ "columns": a.columns, "total": a.total }).to_string())
}

/// First frame of a seeded synthetic video with its annotation and cues,
/// labels resolved.
pub fn scene_json(seed: u32, cue_noise: f64) -> Result<String, String> {
    let cfg = SyntheticConfig {
        seed: seed.into(),
        frames: 1,
        frames_per_video: 1,
        cue_noise,
        ..SyntheticConfig::default()
    };
    let ds = generate_synthetic(&cfg).map_err(|e| e.to_string())?;
    let (a, cues) = (&ds.annotations[0], &ds.cues[0]);
    let bx = |b: &BoundingBox| json!([b.x1, b.y1, b.x2, b.y2]);
    let entities: Vec<Value> = a
        .entities
        .iter()
        .map(|e| json!({ "label": ds.vocab.object_label(e.class), "box": bx(&e.bbox) }))
        .collect();
    let relations: Vec<Value> = a
        .relations
        .iter()
        .map(|r| {
            let preds: Vec<&str> = r.all_predicates().map(|p| ds.vocab.predicate_label(p)).collect();
            json!({ "subject": r.subject, "object": r.object, "predicates": preds })
        })
        .collect();
    let cue_list: Vec<Value> = (0..cues.cues.len())
        .map(|i| {
            let c = &cues.cues[i];
            json!({
                "subject": c.subject,
                "object": c.object,
                "predicates": c.predicates,
                "subject_box": bx(&cues.subject_box(i)),
                "object_box": bx(&cues.object_box(i)),
                "confidence": c.confidence,
            })
        })
        .collect();
    Ok(json!({
        "grid": cfg.grid,
        "entities": entities,
        "relations": relations,
        "cues": cue_list,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn overlap(a: &[f64], b: &[f64]) -> Result<String, JsError> {
    overlap_json(a, b).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn assign(matrix: &str) -> Result<String, JsError> {
    assignment_json(matrix).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn scene(seed: u32, cue_noise: f64) -> Result<String, JsError> {
    scene_json(seed, cue_noise).map_err(|e| JsError::new(&e))
}
