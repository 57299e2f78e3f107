//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgg_core::autodiff::Tape;
use sgg_core::config::RunConfig;
use sgg_core::data::synthetic::{generate_synthetic, SyntheticConfig};
use sgg_core::data::{GtTriplet, Vocabulary};
use sgg_core::geometry::{giou, iou, BoundingBox};
use sgg_core::gradcheck::{grad_check, Coverage};
use sgg_core::losses::{cross_entropy, focal_loss};
use sgg_core::matcher::{hungarian, loss_on_tape, match_predictions};
use sgg_core::metrics::{
    filter_with_constraint, frame_averaged_recall, mean_recall_at_k, recall_at_k, ConstraintScope, FrameCandidates,
    Mode, ScoredTriplet,
};
use sgg_core::model::{FrameInput, SggModel};
use sgg_core::tensor::Tensor2;
use sgg_core::train::{evaluate_model, prepare_frames, Dataset, Trainer};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(start: Instant, limit: Duration) -> (bool, String) {
    let e = start.elapsed();
    (e < limit, format!("{:.1}s of {}s", e.as_secs_f64(), limit.as_secs()))
}

// ---------------------------------------------------------------------------
// 1. Assignment oracle

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn assignment_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA551);
    let mut cases = 0;
    let mut bad = Vec::new();
    for n in 1..=7usize {
        let perms = permutations(n);
        for trial in 0..30 {
            // Mix integer matrices (many ties) with continuous ones.
            let cost = Tensor2::from_fn(n, n, |_, _| {
                if trial % 2 == 0 {
                    rng.random_range(0..6) as f64
                } else {
                    rng.random_range(-5.0..5.0)
                }
            });
            let brute = perms
                .iter()
                .map(|p| p.iter().enumerate().map(|(r, &c)| cost.get(r, c)).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            let a = hungarian(&cost).expect("square matrix");
            let recomputed: f64 = a.columns.iter().enumerate().map(|(r, &c)| cost.get(r, c)).sum();
            cases += 1;
            if a.total != brute || recomputed != brute {
                bad.push(format!("n={n} trial={trial}: {} vs {brute}", a.total));
            }
        }
    }
    let (fast, t) = within(start, Duration::from_secs(10));
    outcome(
        bad.is_empty() && fast && cases >= 200,
        format!("{cases} matrices, {} mismatches, {t}", bad.len()),
    )
}

// ---------------------------------------------------------------------------
// 2. Metric oracle

/// Whether candidate `i` outranks candidate `j`; full ties go to the
/// earlier index.
fn reference_precedes(c: &[ScoredTriplet], i: usize, j: usize) -> bool {
    let (a, b) = (&c[i], &c[j]);
    (a.score, std::cmp::Reverse(a.pair), std::cmp::Reverse(a.predicate), std::cmp::Reverse(i))
        > (b.score, std::cmp::Reverse(b.pair), std::cmp::Reverse(b.predicate), std::cmp::Reverse(j))
}

fn reference_filter(c: &[ScoredTriplet], scope: ConstraintScope, vocab: &Vocabulary) -> Vec<ScoredTriplet> {
    let same = |a: &ScoredTriplet, b: &ScoredTriplet| {
        a.pair == b.pair
            && (scope == ConstraintScope::Global || vocab.group_of(a.predicate) == vocab.group_of(b.predicate))
    };
    (0..c.len())
        .filter(|&i| !(0..c.len()).any(|j| j != i && same(&c[i], &c[j]) && reference_precedes(c, j, i)))
        .map(|i| c[i].clone())
        .collect()
}

fn reference_hits(c: &[ScoredTriplet], gts: &[GtTriplet], k: usize, mode: Mode) -> Vec<bool> {
    // Rank of each candidate = number of candidates that precede it.
    let ranks: Vec<usize> = (0..c.len())
        .map(|i| (0..c.len()).filter(|&j| reference_precedes(c, j, i)).count())
        .collect();
    let mut taken = vec![false; gts.len()];
    for r in 0..k.min(c.len()) {
        let Some(i) = ranks.iter().position(|&x| x == r) else {
            continue;
        };
        let x = &c[i];
        for (g, gt) in gts.iter().enumerate() {
            let ok = x.subject_class == gt.subject_class
                && x.object_class == gt.object_class
                && x.predicate == gt.predicate
                && (mode != Mode::SgDet
                    || (iou(&x.subject_box, &gt.subject_box) >= 0.5 && iou(&x.object_box, &gt.object_box) >= 0.5));
            if ok && !taken[g] {
                taken[g] = true;
                break;
            }
        }
    }
    taken
}

fn random_frame(rng: &mut ChaCha8Rng, boxes: &[BoundingBox]) -> FrameCandidates {
    let n_gt = rng.random_range(0..=5);
    let gts: Vec<GtTriplet> = (0..n_gt)
        .map(|i| GtTriplet {
            pair: i,
            subject_class: 0,
            subject_box: boxes[rng.random_range(0..boxes.len())],
            object_class: rng.random_range(1..3),
            object_box: boxes[rng.random_range(0..boxes.len())],
            predicate: rng.random_range(0..12),
        })
        .collect();
    let n_c = rng.random_range(0..=30);
    let scores = [0.1, 0.25, 0.5, 0.5, 0.75, 0.9];
    let candidates = (0..n_c)
        .map(|_| {
            let sc = scores[rng.random_range(0..scores.len())];
            ScoredTriplet {
                pair: rng.random_range(0..4),
                subject_class: rng.random_range(0..2),
                subject_box: boxes[rng.random_range(0..boxes.len())],
                subject_conf: 1.0,
                object_class: rng.random_range(1..3),
                object_box: boxes[rng.random_range(0..boxes.len())],
                object_conf: 1.0,
                predicate: rng.random_range(0..12),
                predicate_conf: sc,
                score: sc,
            }
        })
        .collect();
    FrameCandidates { candidates, gts }
}

fn metric_oracle() -> Outcome {
    let start = Instant::now();
    let vocab = Vocabulary::desk();
    let boxes = [
        BoundingBox::raw(0.1, 0.1, 0.5, 0.5),
        BoundingBox::raw(0.12, 0.1, 0.52, 0.5),
        BoundingBox::raw(0.3, 0.3, 0.7, 0.7),
        BoundingBox::raw(0.5, 0.5, 0.9, 0.9),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0x3E7);
    let mut fixtures = 0;
    let mut checks = 0;
    let mut bad = Vec::new();
    for fixture in 0..500 {
        let frames: Vec<FrameCandidates> = (0..rng.random_range(1..=3)).map(|_| random_frame(&mut rng, &boxes)).collect();
        fixtures += 1;
        for mode in Mode::ALL {
            for constrained in [false, true] {
                for scope in [ConstraintScope::Global, ConstraintScope::PerGroup] {
                    if !constrained && scope == ConstraintScope::PerGroup {
                        continue;
                    }
                    let set: Vec<FrameCandidates> = frames
                        .iter()
                        .map(|f| FrameCandidates {
                            candidates: if constrained {
                                filter_with_constraint(&f.candidates, scope, &vocab)
                            } else {
                                f.candidates.clone()
                            },
                            gts: f.gts.clone(),
                        })
                        .collect();
                    let ref_set: Vec<Vec<ScoredTriplet>> = frames
                        .iter()
                        .map(|f| {
                            if constrained {
                                reference_filter(&f.candidates, scope, &vocab)
                            } else {
                                f.candidates.clone()
                            }
                        })
                        .collect();
                    for k in [1, 5, 10] {
                        let mut sum = 0.0;
                        let mut counted = 0;
                        let mut hits = vec![0usize; 12];
                        let mut support = vec![0usize; 12];
                        for (fi, (f, rc)) in frames.iter().zip(&ref_set).enumerate() {
                            let h = reference_hits(rc, &f.gts, k, mode);
                            for (g, &hit) in f.gts.iter().zip(&h) {
                                support[g.predicate] += 1;
                                hits[g.predicate] += hit as usize;
                            }
                            let want = if f.gts.is_empty() {
                                1.0
                            } else {
                                h.iter().filter(|&&x| x).count() as f64 / f.gts.len() as f64
                            };
                            let got = recall_at_k(&set[fi].candidates, &f.gts, k, mode, 0.5).expect("valid K");
                            checks += 1;
                            if got != want {
                                bad.push(format!("fixture {fixture} {mode} c={constrained} K={k}: {got} vs {want}"));
                            }
                            if !f.gts.is_empty() {
                                sum += want;
                                counted += 1;
                            }
                        }
                        let want_avg = (counted > 0).then(|| sum / counted as f64);
                        let got_avg = frame_averaged_recall(&set, k, mode, 0.5).expect("valid K");
                        let per: Vec<Option<f64>> = hits
                            .iter()
                            .zip(&support)
                            .map(|(&h, &s)| (s > 0).then(|| h as f64 / s as f64))
                            .collect();
                        let sup: Vec<f64> = per.iter().flatten().copied().collect();
                        let want_mr = (!sup.is_empty()).then(|| sup.iter().sum::<f64>() / sup.len() as f64);
                        let mr = mean_recall_at_k(&set, k, mode, 0.5, 12).expect("valid K");
                        checks += 2;
                        if got_avg != want_avg || mr.mean != want_mr || mr.per_predicate != per || mr.support != support {
                            bad.push(format!("fixture {fixture} {mode} c={constrained} K={k}: aggregate mismatch"));
                        }
                    }
                }
            }
        }
    }
    let (fast, t) = within(start, Duration::from_secs(30));
    if let Some(b) = bad.first() {
        eprintln!("first metric mismatch: {b}");
    }
    outcome(
        bad.is_empty() && fast && fixtures >= 500,
        format!("{fixtures} fixtures, {checks} comparisons, {} mismatches, {t}", bad.len()),
    )
}

// ---------------------------------------------------------------------------
// 3. Gradient suite

fn gradient_config(seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    for (k, v) in [
        ("seed", seed.to_string()),
        ("queries", "4".into()),
        ("model_dim", "8".into()),
        ("embed_dim", "4".into()),
        ("heads", "2".into()),
        ("layers", "1".into()),
        ("ff_dim", "8".into()),
        ("n_ref", "1".into()),
        ("grid", "3".into()),
        ("frames", "10".into()),
        ("cue_noise", "0.2".into()),
    ] {
        cfg.set(k, &v).expect("gradient config key");
    }
    cfg
}

/// Two-frame problem with exactly two cues on the current frame.
fn gradient_problem(seed: u64) -> (RunConfig, Dataset, usize) {
    let mut cfg = gradient_config(seed);
    let mut data_seed = seed;
    loop {
        cfg.data.seed = data_seed;
        let mut ds: Dataset = generate_synthetic(&cfg.data).expect("synthetic data").into();
        if let Some(i) = (0..ds.len()).find(|&i| ds.cues[i].cues.len() >= 2) {
            ds.cues[i].cues.truncate(2);
            return (cfg, ds, i);
        }
        data_seed += 1000;
    }
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    let mut seeds = 0;
    let mut scalars = 0;
    for seed in 0..20u64 {
        let (cfg, ds, i) = gradient_problem(seed);
        let frames = prepare_frames(&ds, &cfg).expect("prepared frames");
        let f = &frames[i];
        assert_eq!(f.features.rows(), 9);
        assert_eq!(f.cues.len(), 2);
        assert_eq!(f.refs.len(), 1);
        let model = SggModel::new(cfg.model.clone(), seed).expect("model");
        let refs: Vec<FrameInput<'_>> = f.refs.iter().map(|&r| frames[r].input()).collect();
        let matching = {
            let preds = model.forward(&f.input(), &refs, cfg.switches).expect("forward");
            match_predictions(&f.targets, &preds, &cfg.loss).expect("matching")
        };
        let objective = |tape: &mut Tape, store: &sgg_core::params::ParamStore| {
            let mut m = model.clone();
            m.store = store.clone();
            let out = m.forward_on_tape(tape, &f.input(), &refs, cfg.switches)?;
            Ok(loss_on_tape(tape, &out, &f.targets, &matching, &cfg.loss).total)
        };
        let r = grad_check(objective, &model.store, Coverage::All).expect("finite objective");
        seeds += 1;
        scalars += r.checked;
        if r.max_rel_error > worst {
            worst = r.max_rel_error;
            worst_at = match &r.worst {
                Some((name, i)) => format!("seed {seed}, {name}[{i}]"),
                None => format!("seed {seed}"),
            };
        }
    }
    let (fast, t) = within(start, Duration::from_secs(120));
    outcome(
        worst < 1e-5 && fast && seeds >= 20,
        format!("{seeds} seeds, {scalars} scalars, max rel error {worst:.2e} ({worst_at}), {t}"),
    )
}

// ---------------------------------------------------------------------------
// 4. Unit values

fn unit_values() -> Outcome {
    let unit = |b: [f64; 4]| BoundingBox::raw(b[0] / 2.0, b[1] / 2.0, b[2] / 2.0, b[3] / 2.0);
    let g1 = giou(&unit([0.0, 0.0, 1.0, 1.0]), &unit([1.0, 1.0, 2.0, 2.0]));
    let a = unit([0.0, 0.0, 2.0, 2.0]);
    let b = unit([1.0, 1.0, 2.0, 2.0]);
    let (i2, g2) = (iou(&a, &b), giou(&a, &b));
    // -0.25 * 0.5^2 * ln 0.5
    let focal_oracle = 0.25 * 0.25 * std::f64::consts::LN_2;
    let focal = focal_loss(&[0.5], &[true], 0.25, 2.0);
    let ce = cross_entropy(&[0.3; 4], 2, None).expect("valid target");
    let checks = [
        ("giou disjoint", g1, -0.5),
        ("iou nested", i2, 0.25),
        ("giou nested", g2, 0.25),
        ("focal", focal, focal_oracle),
        ("focal rounded", focal, 0.0433217),
        ("ce uniform", ce, 4f64.ln()),
    ];
    let mut fails = Vec::new();
    for (name, got, want) in checks {
        let tol = if name == "focal rounded" { 5e-8 } else { 1e-9 };
        if (got - want).abs() > tol {
            fails.push(format!("{name}: {got} vs {want}"));
        }
    }
    outcome(
        fails.is_empty(),
        if fails.is_empty() {
            format!("GIoU {g1}, {g2}; focal {focal:.9}; CE {ce:.9}")
        } else {
            fails.join("; ")
        },
    )
}

// ---------------------------------------------------------------------------
// 5. Overfit

fn overfit() -> Outcome {
    let start = Instant::now();
    let mut cfg = RunConfig::default();
    cfg.set("seed", "0").expect("seed");
    let ds: Dataset = generate_synthetic(&cfg.data).expect("data").into();
    let shape_ok = ds.len() == 30
        && ds.vocab.object_count() == 6
        && ds.vocab.predicate_count() == 12
        && cfg.model.queries == 8
        && cfg.model.model_dim == 32
        && cfg.model.layers == 2
        && cfg.train.steps <= 2000;
    let mut trainer = Trainer::new(cfg.clone(), &ds).expect("trainer");
    trainer.run(|_| {}).expect("training");
    let report = evaluate_model(&trainer.model, &ds, &cfg).expect("evaluation");
    let r = |m| report.entry(m, true, 10).and_then(|e| e.recall).unwrap_or(0.0);
    let (pred, det) = (r(Mode::PredCls), r(Mode::SgDet));
    let (fast, t) = within(start, Duration::from_secs(600));
    outcome(
        shape_ok && pred >= 0.90 && det >= 0.70 && fast,
        format!("{} steps: PredCLS R@10 {pred:.4}, SGDET R@10 {det:.4}, {t}", cfg.train.steps),
    )
}

// ---------------------------------------------------------------------------
// 6. Ablation direction

/// Training set, held-out set and the row's switches; returns held-out
/// PredCLS with-constraint R@10.
fn ablation_run(seed: u64, content: &str, memory: &str) -> f64 {
    let mut cfg = RunConfig::default();
    for (k, v) in [
        ("seed", seed.to_string()),
        ("cue_noise", "0.2".into()),
        ("frames", ABLATION_FRAMES.to_string()),
        ("steps", ABLATION_STEPS.to_string()),
        ("content_source", content.into()),
        ("predicate_memory", memory.into()),
        ("eval_modes", "predcls".into()),
        ("eval_constraints", "with".into()),
        ("eval_ks", "10".into()),
    ] {
        cfg.set(k, &v).expect("ablation config key");
    }
    let train: Dataset = generate_synthetic(&cfg.data).expect("training data").into();
    let held_out_cfg = SyntheticConfig {
        seed: seed + HELD_OUT_SEED_OFFSET,
        frames: ABLATION_HELD_OUT_FRAMES,
        ..cfg.data.clone()
    };
    let test: Dataset = generate_synthetic(&held_out_cfg).expect("held-out data").into();
    let mut trainer = Trainer::new(cfg.clone(), &train).expect("trainer");
    trainer.run(|_| {}).expect("training");
    let report = evaluate_model(&trainer.model, &test, &cfg).expect("evaluation");
    report.entry(Mode::PredCls, true, 10).and_then(|e| e.recall).unwrap_or(0.0)
}

const ABLATION_FRAMES: usize = 150;
const ABLATION_STEPS: usize = 4000;
const ABLATION_HELD_OUT_FRAMES: usize = 50;
const HELD_OUT_SEED_OFFSET: u64 = 1000;

fn ablation_direction() -> Outcome {
    let start = Instant::now();
    let rows = [("zero", "image"), ("vlm", "image"), ("vlm", "bank")];
    let mut means = [0.0; 3];
    for seed in 0..5u64 {
        for (r, (c, m)) in rows.iter().enumerate() {
            means[r] += ablation_run(seed, c, m) / 5.0;
        }
    }
    let [zero, cues, bank] = means;
    outcome(
        bank > cues && cues > zero,
        format!(
            "mean held-out PredCLS R@10: zero queries {zero:.4}, cue queries {cues:.4}, cue queries + bank {bank:.4}, {:.0}s",
            start.elapsed().as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// 7. Metric invariants

fn metric_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1A7);
    let mut violations = Vec::new();
    let mut configs = 0;
    for c in 0..50u64 {
        let mut cfg = RunConfig::default();
        for (k, v) in [
            ("seed", c.to_string()),
            ("frames", rng.random_range(1..=12usize).to_string()),
            ("frames_per_video", rng.random_range(1..=4usize).to_string()),
            ("cue_noise", format!("{}", rng.random_range(0..=4) as f64 * 0.25)),
            ("zipf_exponent", format!("{}", rng.random_range(0..=2) as f64 * 0.5)),
            ("queries", rng.random_range(4..=8usize).to_string()),
            ("model_dim", "8".into()),
            ("heads", "2".into()),
            ("layers", "1".into()),
            ("ff_dim", "16".into()),
            ("embed_dim", "4".into()),
            ("eval_ks", "10,20,50".into()),
            ("content_source", if c % 2 == 0 { "vlm" } else { "zero" }.into()),
            ("predicate_memory", if c % 3 == 0 { "image" } else { "bank" }.into()),
        ] {
            cfg.set(k, &v).expect("invariant config key");
        }
        let ds: Dataset = generate_synthetic(&cfg.data).expect("data").into();
        let model = SggModel::new(cfg.model.clone(), c).expect("model");
        let report = evaluate_model(&model, &ds, &cfg).expect("evaluation");
        configs += 1;
        for mode in Mode::ALL {
            for constraint in [true, false] {
                let r: Vec<Option<f64>> = [10, 20, 50]
                    .iter()
                    .map(|&k| report.entry(mode, constraint, k).expect("entry").recall)
                    .collect();
                let v: Vec<f64> = r.iter().map(|x| x.unwrap_or(1.0)).collect();
                if !(v[0] <= v[1] && v[1] <= v[2]) {
                    violations.push(format!("config {c} {mode} c={constraint}: {v:?}"));
                }
            }
            for k in [10, 20, 50] {
                let w = report.entry(mode, true, k).expect("entry").recall.unwrap_or(1.0);
                let n = report.entry(mode, false, k).expect("entry").recall.unwrap_or(1.0);
                if w > n {
                    violations.push(format!("config {c} {mode} K={k}: with {w} > no {n}"));
                }
            }
        }
    }
    outcome(
        violations.is_empty() && configs == 50,
        match violations.first() {
            Some(v) => format!("{configs} configs, {} violations, first: {v}", violations.len()),
            None => format!("{configs} configs, 0 violations"),
        },
    )
}

// ---------------------------------------------------------------------------
// 8. Reproducibility

fn run_sgg(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_sgg"))
        .args(args)
        .env("RUST_LOG", "warn")
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn pipeline(root: &Path) -> bool {
    let s = |p: &str| root.join(p).display().to_string();
    let common = ["--seed", "7"];
    run_sgg(&[&common[..], &["--out", &s("data"), "gen-data", "--frames", "10"]].concat())
        && run_sgg(
            &[
                &common[..],
                &["--out", &s("run"), "train", "--data", &s("data"), "--frames", "10", "--steps", "15"],
            ]
            .concat(),
        )
        && run_sgg(
            &[
                &common[..],
                &[
                    "--out",
                    &s("eval"),
                    "eval",
                    "--data",
                    &s("data"),
                    "--checkpoint",
                    &s("run/model.ckpt"),
                    "--frames",
                    "10",
                    "--steps",
                    "15",
                ],
            ]
            .concat(),
        )
}

fn files_under(root: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for sub in ["data", "run", "eval"] {
        let mut names: Vec<_> = std::fs::read_dir(root.join(sub))
            .map(|d| d.filter_map(|e| e.ok().map(|e| e.path())).collect())
            .unwrap_or_default();
        names.sort();
        out.extend(names.into_iter().map(|p| p.strip_prefix(root).expect("under root").to_path_buf()));
    }
    out
}

fn reproducibility() -> Outcome {
    let a = tempfile::tempdir().expect("tempdir");
    let b = tempfile::tempdir().expect("tempdir");
    if !pipeline(a.path()) || !pipeline(b.path()) {
        return outcome(false, "a pipeline command failed");
    }
    let fa = files_under(a.path());
    let fb = files_under(b.path());
    if fa != fb || fa.is_empty() {
        return outcome(false, format!("file sets differ: {fa:?} vs {fb:?}"));
    }
    let differing: Vec<String> = fa
        .iter()
        .filter(|p| std::fs::read(a.path().join(p)).ok() != std::fs::read(b.path().join(p)).ok())
        .map(|p| p.display().to_string())
        .collect();
    outcome(
        differing.is_empty(),
        format!("{} files compared, differing: {differing:?}", fa.len()),
    )
}

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 assignment oracle", assignment_oracle),
        ("2 metric oracle", metric_oracle),
        ("3 gradient suite", gradient_suite),
        ("4 unit values", unit_values),
        ("5 overfit", overfit),
        ("6 ablation direction", ablation_direction),
        ("7 metric invariants", metric_invariants),
        ("8 reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        if filter.as_ref().is_some_and(|f| !name.contains(f.as_str())) {
            continue;
        }
        let o = run();
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
