use sgg_core::config::RunConfig;
use sgg_core::data::synthetic::{generate_synthetic, zipf_weights, SyntheticConfig};
use sgg_core::data::{parse_annotations, Vocabulary};
use sgg_core::params::{read_checkpoint, write_checkpoint};
use sgg_core::train::{Dataset, Trainer};
use sgg_core::SggError;

/// Chi-square 99.9% quantile for 11 degrees of freedom.
const CHI2_11_999: f64 = 31.264;

#[test]
fn predicate_frequencies_follow_zipf() {
    for exponent in [0.0, 1.0, 1.5] {
        let cfg = SyntheticConfig {
            seed: 11,
            frames: 4000,
            frames_per_video: 1,
            zipf_exponent: exponent,
            ..SyntheticConfig::default()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        let mut counts = [0f64; 12];
        for a in &ds.annotations {
            for r in &a.relations {
                let preds: Vec<usize> = r.all_predicates().collect();
                assert_eq!(preds.len(), 1);
                counts[preds[0]] += 1.0;
            }
        }
        let total: f64 = counts.iter().sum();
        let w = zipf_weights(12, exponent);
        let norm: f64 = w.iter().sum();
        let chi2: f64 = counts
            .iter()
            .zip(&w)
            .map(|(&o, &wk)| {
                let e = total * wk / norm;
                (o - e).powi(2) / e
            })
            .sum();
        assert!(chi2 < CHI2_11_999, "exponent {exponent}: chi2 {chi2} over {total} relations");
    }
}

#[test]
fn dataset_round_trips_through_files() {
    let cfg = SyntheticConfig {
        seed: 3,
        frames: 9,
        frames_per_video: 4,
        cue_noise: 0.3,
        ..SyntheticConfig::default()
    };
    let ds: Dataset = generate_synthetic(&cfg).unwrap().into();
    let dir = tempfile::tempdir().unwrap();
    ds.save(dir.path()).unwrap();
    let back = Dataset::load(dir.path()).unwrap();
    assert_eq!(back, ds);

    let again = tempfile::tempdir().unwrap();
    back.save(again.path()).unwrap();
    for f in ["vocab.txt", "annotations.jsonl", "cues.jsonl", "frames.jsonl"] {
        assert_eq!(
            std::fs::read(dir.path().join(f)).unwrap(),
            std::fs::read(again.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn vocabulary_text_round_trips() {
    let v = Vocabulary::from_counts(8, [2, 6, 1]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("v.txt");
    v.save(&p).unwrap();
    assert_eq!(Vocabulary::load(&p).unwrap(), v);
}

#[test]
fn config_text_round_trips() {
    let mut cfg = RunConfig::default();
    for (k, v) in [
        ("seed", "99"),
        ("lr", "0.000123"),
        ("cue_noise", "0.35"),
        ("predicate_groups", "2,3,4"),
        ("eval_ks", "5,10"),
        ("constraint_scope", "per_group"),
        ("content_source", "zero"),
        ("predicate_memory", "image"),
    ] {
        cfg.set(k, v).unwrap();
    }
    let text = cfg.to_text();
    let back = RunConfig::parse(&text, "echo").unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.to_text(), text);
}

#[test]
fn checkpoint_round_trips_bitwise() {
    let mut cfg = RunConfig::default();
    for (k, v) in [("frames", "4"), ("steps", "3"), ("model_dim", "8"), ("heads", "2"), ("ff_dim", "16")] {
        cfg.set(k, v).unwrap();
    }
    let ds: Dataset = generate_synthetic(&cfg.data).unwrap().into();
    let mut t = Trainer::new(cfg, &ds).unwrap();
    t.run(|_| {}).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.ckpt");
    t.save_checkpoint(&p).unwrap();
    let entries = read_checkpoint(&p).unwrap();
    assert_eq!(entries, t.checkpoint_entries());
    let q = dir.path().join("n.ckpt");
    write_checkpoint(&q, &entries).unwrap();
    assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
}

#[test]
fn malformed_annotation_line_is_reported() {
    let vocab = Vocabulary::desk();
    let text = "{\"video\":\"v\",\"frame\":0,\"entities\":[],\"triplets\":[]}\n{not json}\n";
    match parse_annotations(text, "inline", &vocab) {
        Err(SggError::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}
