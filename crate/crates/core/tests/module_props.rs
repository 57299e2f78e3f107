use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sgg_core::bank::{BankParams, Role, TOKENS_PER_REGION};
use sgg_core::geometry::BoundingBox;
use sgg_core::model::{ModelConfig, SggModel};
use sgg_core::params::ParamStore;
use sgg_core::query::{build_predicate_queries, build_subject_object_queries, AnchorWeights, CueEmbeddings};
use sgg_core::tensor::Tensor2;

const D_L: usize = 3;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor2> {
    prop::collection::vec(-2.0..2.0f64, rows * cols).prop_map(move |d| Tensor2::new(rows, cols, d).unwrap())
}

fn cues(x: usize) -> impl Strategy<Value = CueEmbeddings> {
    (
        prop::collection::vec(matrix(x, D_L), 6),
        prop::collection::vec((0.0..0.5f64, 0.0..0.5f64, 0.05..0.5f64, 0.05..0.5f64), 2 * x),
    )
        .prop_map(move |(m, b)| {
            let bx = |(x, y, w, h): (f64, f64, f64, f64)| BoundingBox::raw(x, y, x + w, y + h);
            CueEmbeddings {
                sub_t: m[0].clone(),
                obj_t: m[1].clone(),
                pred_t: m[2].clone(),
                sub_v: m[3].clone(),
                obj_v: m[4].clone(),
                pred_v: m[5].clone(),
                boxes: (0..x).map(|i| (bx(b[2 * i]), bx(b[2 * i + 1]))).collect(),
            }
        })
}

fn reorder(c: &CueEmbeddings, order: &[usize]) -> CueEmbeddings {
    let rows = |t: &Tensor2| Tensor2::from_fn(order.len(), t.cols(), |r, k| t.get(order[r], k));
    CueEmbeddings {
        sub_t: rows(&c.sub_t),
        obj_t: rows(&c.obj_t),
        pred_t: rows(&c.pred_t),
        sub_v: rows(&c.sub_v),
        obj_v: rows(&c.obj_v),
        pred_v: rows(&c.pred_v),
        boxes: order.iter().map(|&i| c.boxes[i]).collect(),
    }
}

fn dot(w: &Tensor2, r: usize, x: &[f64]) -> f64 {
    w.row(r).iter().zip(x).map(|(a, b)| a * b).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Row `i` of the query content is the projection of cue `i`; the rows
    /// beyond the cue count carry no content; position rows are untouched.
    #[test]
    fn query_rows_follow_cues(
        (x, c) in (0usize..=5).prop_flat_map(|x| (Just(x), cues(x))),
        anchors in matrix(5, 4),
        so_proj in matrix(4, 2 * D_L),
        p_proj in matrix(4, D_L),
        so_out in matrix(5, 4),
    ) {
        let a = AnchorWeights { w: anchors.clone() };
        let so = build_subject_object_queries(&c, &a, &so_proj).unwrap();
        let pq = build_predicate_queries(&c, &so_out, &p_proj).unwrap();
        prop_assert_eq!(&so.position, &anchors);
        prop_assert_eq!(&pq.position, &so_out);
        for i in 0..5 {
            for k in 0..4 {
                let (want_so, want_p) = if i < x {
                    let joined: Vec<f64> = c.sub_t.row(i).iter().chain(c.obj_t.row(i)).copied().collect();
                    (dot(&so_proj, k, &joined), dot(&p_proj, k, c.pred_t.row(i)))
                } else {
                    (0.0, 0.0)
                };
                prop_assert!((so.content.get(i, k) - want_so).abs() < 1e-12);
                prop_assert!((pq.content.get(i, k) - want_p).abs() < 1e-12);
            }
        }
    }

    /// Reordering cues reorders the assembled bank block by block.
    #[test]
    fn bank_blocks_follow_cue_order(
        c in cues(4),
        order in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
        seed in any::<u64>(),
    ) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bank = BankParams::new(&mut store, D_L, 8, 2, 1, 16, &mut rng).unwrap();
        let a = bank.assemble(&store, &c).unwrap();
        let b = bank.assemble(&store, &reorder(&c, &order)).unwrap();
        prop_assert_eq!(a.tokens.rows(), 4 * TOKENS_PER_REGION);
        prop_assert_eq!(&a.roles, &b.roles);
        for (new, &old) in order.iter().enumerate() {
            for t in 0..TOKENS_PER_REGION {
                prop_assert_eq!(
                    b.tokens.row(new * TOKENS_PER_REGION + t),
                    a.tokens.row(old * TOKENS_PER_REGION + t)
                );
            }
        }
        prop_assert_eq!(a.roles[TOKENS_PER_REGION - 1], Role::Spatial);
    }

    /// Reference frames enter only as an unordered key set over triplet
    /// rows of width `2d`.
    #[test]
    fn temporal_ignores_reference_order(
        seed in 0u64..1000,
        cur in matrix(4, 16),
        r1 in matrix(4, 16),
        r2 in matrix(4, 16),
        r3 in matrix(4, 16),
    ) {
        let cfg = ModelConfig {
            queries: 4,
            model_dim: 8,
            embed_dim: 4,
            heads: 2,
            layers: 1,
            ff_dim: 16,
            n_ref: 3,
            ..ModelConfig::default()
        };
        let model = SggModel::new(cfg, seed).unwrap();
        let a = model.temporal_aggregate(&cur, &[r1.clone(), r2.clone(), r3.clone()]).unwrap();
        let b = model.temporal_aggregate(&cur, &[r3, r1, r2]).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert_eq!(model.temporal_aggregate(&cur, &[]).unwrap(), cur);
    }
}
