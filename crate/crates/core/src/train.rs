//! Datasets on disk, the Adam training loop, checkpoints and model
//! evaluation.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tape;
use crate::config::{RunConfig, TrainConfig};
use crate::data::embed::EmbeddingProvider;
use crate::data::synthetic::SyntheticDataset;
use crate::data::{
    load_annotations, load_cues, load_frames, save_annotations, save_cues, save_frames, FrameAnnotation, FrameCues,
    FrameFeatures, Vocabulary,
};
use crate::error::{Result, SggError};
use crate::matcher::{loss_on_tape, match_predictions, relation_targets, LossBreakdown, RelationTarget};
use crate::metrics::{evaluate, MetricsReport};
use crate::model::{FrameInput, SggModel, Switches, TripletPredictionSet};
use crate::params::{read_checkpoint, write_checkpoint, ParamStore};
use crate::query::{AnchorWeights, CueEmbeddings};
use crate::tensor::Tensor2;

pub const VOCAB_FILE: &str = "vocab.txt";
pub const ANNOTATION_FILE: &str = "annotations.jsonl";
pub const CUE_FILE: &str = "cues.jsonl";
pub const FRAME_FILE: &str = "frames.jsonl";
const OPT_PREFIX: &str = "opt/";

/// Frame-aligned annotations, cues and features.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub frames: Vec<FrameFeatures>,
    pub annotations: Vec<FrameAnnotation>,
    pub cues: Vec<FrameCues>,
}

impl From<SyntheticDataset> for Dataset {
    fn from(s: SyntheticDataset) -> Self {
        Dataset {
            vocab: s.vocab,
            frames: s.frames,
            annotations: s.annotations,
            cues: s.cues,
        }
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.annotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.annotations.is_empty()
    }

    /// Checks that the three per-frame lists describe the same frames in
    /// the same order.
    pub fn validate(&self) -> Result<()> {
        let n = self.annotations.len();
        if self.frames.len() != n || self.cues.len() != n {
            return Err(SggError::Consistency(format!(
                "{n} annotations, {} frame features, {} cue records",
                self.frames.len(),
                self.cues.len()
            )));
        }
        for (i, a) in self.annotations.iter().enumerate() {
            let (f, c) = (&self.frames[i], &self.cues[i]);
            if (f.video.as_str(), f.frame) != (a.video.as_str(), a.frame)
                || (c.video.as_str(), c.frame) != (a.video.as_str(), a.frame)
            {
                return Err(SggError::Consistency(format!(
                    "record {} is {}/{} in annotations but {}/{} in features and {}/{} in cues",
                    i + 1,
                    a.video,
                    a.frame,
                    f.video,
                    f.frame,
                    c.video,
                    c.frame
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| SggError::io(dir, e))?;
        self.vocab.save(&dir.join(VOCAB_FILE))?;
        save_annotations(&dir.join(ANNOTATION_FILE), &self.annotations, &self.vocab)?;
        save_cues(&dir.join(CUE_FILE), &self.cues)?;
        save_frames(&dir.join(FRAME_FILE), &self.frames)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let vocab = Vocabulary::load(&dir.join(VOCAB_FILE))?;
        let d = Dataset {
            annotations: load_annotations(&dir.join(ANNOTATION_FILE), &vocab)?,
            cues: load_cues(&dir.join(CUE_FILE))?,
            frames: load_frames(&dir.join(FRAME_FILE))?,
            vocab,
        };
        d.validate()?;
        Ok(d)
    }

    /// Indices of the `n_ref` frames of the same video closest in frame
    /// number to frame `i` (earlier frame first on ties), nearest first.
    pub fn reference_frames(&self, i: usize, n_ref: usize) -> Vec<usize> {
        let a = &self.annotations[i];
        let mut others: Vec<usize> = (0..self.len())
            .filter(|&j| j != i && self.annotations[j].video == a.video)
            .collect();
        others.sort_by_key(|&j| {
            let f = self.annotations[j].frame;
            (f.abs_diff(a.frame), f, j)
        });
        others.truncate(n_ref);
        others
    }
}

/// Model-ready inputs of one frame.
#[derive(Clone, Debug)]
pub struct PreparedFrame {
    pub features: Tensor2,
    pub cues: CueEmbeddings,
    pub annotation: FrameAnnotation,
    pub targets: Vec<RelationTarget>,
    pub refs: Vec<usize>,
}

impl PreparedFrame {
    pub fn input(&self) -> FrameInput<'_> {
        FrameInput {
            features: &self.features,
            cues: &self.cues,
        }
    }
}

pub fn embedding_provider(cfg: &RunConfig) -> Result<EmbeddingProvider> {
    match &cfg.embedding_table {
        Some(p) => EmbeddingProvider::from_table_file(p, cfg.model.embed_dim),
        None => Ok(EmbeddingProvider::hashed(cfg.model.embed_dim, cfg.embedding_seed)),
    }
}

/// Embeds cues (truncated to the query count) and resolves targets and
/// reference frames.
pub fn prepare_frames(dataset: &Dataset, cfg: &RunConfig) -> Result<Vec<PreparedFrame>> {
    dataset.validate()?;
    let provider = embedding_provider(cfg)?;
    let p = dataset.vocab.predicate_count();
    if dataset.vocab.object_count() != cfg.model.object_classes || dataset.vocab.group_sizes() != cfg.model.predicate_groups {
        return Err(SggError::Config(format!(
            "data vocabulary has {} objects and groups {:?}; config expects {} and {:?}",
            dataset.vocab.object_count(),
            dataset.vocab.group_sizes(),
            cfg.model.object_classes,
            cfg.model.predicate_groups
        )));
    }
    (0..dataset.len())
        .map(|i| {
            let f = &dataset.frames[i];
            f.validate()?;
            Ok(PreparedFrame {
                features: f.tokens(),
                cues: CueEmbeddings::from_cues(&dataset.cues[i], &provider, cfg.model.queries)?,
                annotation: dataset.annotations[i].clone(),
                targets: relation_targets(&dataset.annotations[i], p),
                refs: dataset.reference_frames(i, cfg.model.n_ref),
            })
        })
        .collect()
}

/// First and second moment estimates for every parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub m: Vec<Tensor2>,
    pub v: Vec<Tensor2>,
    pub t: u64,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Tensor2> = store.iter().map(|p| Tensor2::zeros(p.value.rows(), p.value.cols())).collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// One update from the gradients held in `store`. Weight decay is
    /// decoupled from the moment estimates.
    pub fn step(&mut self, store: &mut ParamStore, cfg: &TrainConfig) {
        self.t += 1;
        let scale = if cfg.grad_clip > 0.0 {
            let norm = store
                .iter()
                .flat_map(|p| p.grad.data().iter())
                .map(|g| g * g)
                .sum::<f64>()
                .sqrt();
            if norm > cfg.grad_clip {
                cfg.grad_clip / norm
            } else {
                1.0
            }
        } else {
            1.0
        };
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for (i, p) in store.iter_mut().enumerate() {
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            let (w, g) = (p.value.data_mut(), p.grad.data());
            for k in 0..w.len() {
                let gk = g[k] * scale;
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
                let update = (m[k] / bc1) / ((v[k] / bc2).sqrt() + cfg.adam_eps);
                w[k] -= cfg.lr * (update + cfg.weight_decay * w[k]);
            }
        }
    }

    fn entries(&self, store: &ParamStore) -> Vec<(String, Tensor2)> {
        let mut out = vec![(format!("{OPT_PREFIX}step"), Tensor2::scalar(self.t as f64))];
        for (i, p) in store.iter().enumerate() {
            out.push((format!("{OPT_PREFIX}m/{}", p.name), self.m[i].clone()));
            out.push((format!("{OPT_PREFIX}v/{}", p.name), self.v[i].clone()));
        }
        out
    }

    fn from_entries(entries: &[(String, Tensor2)], store: &ParamStore) -> Result<Self> {
        let find = |name: String| {
            entries
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| SggError::Compatibility {
                    name: name.clone(),
                    detail: "is missing from the checkpoint".into(),
                })
        };
        let mut adam = Adam::new(store);
        adam.t = find(format!("{OPT_PREFIX}step"))?.get(0, 0) as u64;
        for (i, p) in store.iter().enumerate() {
            for (slot, kind) in [(&mut adam.m[i], "m"), (&mut adam.v[i], "v")] {
                let name = format!("{OPT_PREFIX}{kind}/{}", p.name);
                let t = find(name.clone())?;
                if t.shape() != p.value.shape() {
                    return Err(SggError::Compatibility {
                        name,
                        detail: format!("has shape {:?}, expected {:?}", t.shape(), p.value.shape()),
                    });
                }
                *slot = t;
            }
        }
        Ok(adam)
    }
}

/// Loss of one optimizer step, averaged over its frames.
#[derive(Clone, Debug, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub frames: Vec<usize>,
    pub loss: LossBreakdown,
}

pub const LOSS_CSV_HEADER: &str = "step,total,sub_cls,obj_cls,predicate,box_l1,box_giou,no_object";

impl StepLog {
    pub fn csv_row(&self) -> String {
        let l = &self.loss;
        format!(
            "{},{},{},{},{},{},{},{}",
            self.step,
            l.total(),
            l.sub_cls,
            l.obj_cls,
            l.predicate,
            l.box_l1,
            l.box_giou,
            l.no_object
        )
    }
}

pub struct Trainer {
    pub cfg: RunConfig,
    pub model: SggModel,
    pub adam: Adam,
    pub frames: Vec<PreparedFrame>,
    /// Steps completed so far.
    pub step: usize,
}

impl Trainer {
    pub fn new(cfg: RunConfig, dataset: &Dataset) -> Result<Self> {
        cfg.validate()?;
        let frames = prepare_frames(dataset, &cfg)?;
        let mut model = SggModel::new(cfg.model.clone(), cfg.seed)?;
        if let Some(path) = &cfg.anchors {
            model.set_anchors(&AnchorWeights::load(path, cfg.model.queries, cfg.model.model_dim)?)?;
        }
        let adam = Adam::new(&model.store);
        Ok(Trainer {
            cfg,
            model,
            adam,
            frames,
            step: 0,
        })
    }

    /// Frames consumed by optimizer step `step`: consecutive slices of a
    /// per-epoch permutation seeded by `(seed, epoch)`.
    pub fn batch(&self, step: usize) -> Vec<usize> {
        let n = self.frames.len();
        let b = self.cfg.train.batch_size;
        let mut out = Vec::with_capacity(b);
        let mut cached: Option<(usize, Vec<usize>)> = None;
        for pos in step * b..(step + 1) * b {
            let epoch = pos / n;
            if cached.as_ref().map(|c| c.0) != Some(epoch) {
                let mut order: Vec<usize> = (0..n).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
                rng.set_stream(epoch as u64 + 1);
                order.shuffle(&mut rng);
                cached = Some((epoch, order));
            }
            out.push(cached.as_ref().expect("epoch order").1[pos % n]);
        }
        out
    }

    /// Records one frame's loss with its references and returns the tape
    /// and the loss handles.
    pub fn frame_loss(&self, i: usize) -> Result<(Tape, crate::matcher::LossVars)> {
        let f = &self.frames[i];
        let refs: Vec<FrameInput<'_>> = f.refs.iter().map(|&r| self.frames[r].input()).collect();
        let mut tape = Tape::new();
        let out = self.model.forward_on_tape(&mut tape, &f.input(), &refs, self.cfg.switches)?;
        let preds = self.model.predictions(&tape, &out);
        let m = match_predictions(&f.targets, &preds, &self.cfg.loss)?;
        let lv = loss_on_tape(&mut tape, &out, &f.targets, &m, &self.cfg.loss);
        Ok((tape, lv))
    }

    /// Runs one optimizer step.
    pub fn train_step(&mut self) -> Result<StepLog> {
        if self.frames.is_empty() {
            return Err(SggError::Config("cannot train on an empty dataset".into()));
        }
        let step = self.step;
        let batch = self.batch(step);
        let k = 1.0 / batch.len() as f64;
        self.model.store.zero_grads();
        let mut loss = LossBreakdown::default();
        for &i in &batch {
            let (tape, lv) = self.frame_loss(i)?;
            let b = lv.breakdown(&tape);
            if !b.total().is_finite() {
                return Err(SggError::Divergence { step });
            }
            loss.add(&b.scaled(k));
            let grads = tape.backward(lv.total);
            for (id, g) in grads.params() {
                self.model.store.get_mut(id).grad.add_assign(&g.scale(k));
            }
        }
        self.adam.step(&mut self.model.store, &self.cfg.train);
        self.step += 1;
        Ok(StepLog {
            step,
            frames: batch,
            loss,
        })
    }

    /// Trains until `cfg.train.steps` steps are done, passing each log to
    /// `on_step`.
    pub fn run(&mut self, mut on_step: impl FnMut(&StepLog)) -> Result<Vec<StepLog>> {
        let mut logs = Vec::new();
        while self.step < self.cfg.train.steps {
            let log = self.train_step()?;
            on_step(&log);
            logs.push(log);
        }
        Ok(logs)
    }

    /// Model parameters followed by optimizer state.
    pub fn checkpoint_entries(&self) -> Vec<(String, Tensor2)> {
        let mut e = self.model.store.entries();
        e.extend(self.adam.entries(&self.model.store));
        e
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        write_checkpoint(path, &self.checkpoint_entries())
    }

    /// Restores parameters and, when present, optimizer state; the step
    /// counter resumes from the stored optimizer step.
    pub fn restore(&mut self, entries: &[(String, Tensor2)]) -> Result<()> {
        self.model.store.load_entries(entries, OPT_PREFIX)?;
        if entries.iter().any(|(n, _)| n.starts_with(OPT_PREFIX)) {
            self.adam = Adam::from_entries(entries, &self.model.store)?;
            self.step = self.adam.t as usize;
        }
        Ok(())
    }

    pub fn resume(&mut self, path: &Path) -> Result<()> {
        self.restore(&read_checkpoint(path)?)
    }
}

/// Loads model parameters from a checkpoint, ignoring optimizer state.
pub fn load_model(cfg: &RunConfig, path: &Path) -> Result<SggModel> {
    let mut model = SggModel::new(cfg.model.clone(), cfg.seed)?;
    model.store.load_entries(&read_checkpoint(path)?, OPT_PREFIX)?;
    Ok(model)
}

/// Forward passes over every frame, split across threads.
pub fn predict_frames(model: &SggModel, frames: &[PreparedFrame], sw: Switches) -> Result<Vec<TripletPredictionSet>> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(frames.len().max(1));
    let chunk = frames.len().div_ceil(threads).max(1);
    let indices: Vec<usize> = (0..frames.len()).collect();
    let results: Vec<Result<Vec<TripletPredictionSet>>> = std::thread::scope(|s| {
        let handles: Vec<_> = indices
            .chunks(chunk)
            .map(|ids| {
                s.spawn(move || {
                    ids.iter()
                        .map(|&i| {
                            let f = &frames[i];
                            let refs: Vec<FrameInput<'_>> = f.refs.iter().map(|&r| frames[r].input()).collect();
                            model.forward(&f.input(), &refs, sw)
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("prediction thread")).collect()
    });
    let mut out = Vec::with_capacity(frames.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

pub fn evaluate_model(model: &SggModel, dataset: &Dataset, cfg: &RunConfig) -> Result<MetricsReport> {
    let frames = prepare_frames(dataset, cfg)?;
    let preds = predict_frames(model, &frames, cfg.switches)?;
    let pairs: Vec<(TripletPredictionSet, FrameAnnotation)> =
        preds.into_iter().zip(frames.into_iter().map(|f| f.annotation)).collect();
    evaluate(&pairs, &dataset.vocab, &cfg.eval)
}

/// Full loss log as CSV.
pub fn loss_csv(logs: &[StepLog]) -> String {
    let mut s = String::from(LOSS_CSV_HEADER);
    s.push('\n');
    for l in logs {
        let _ = writeln!(s, "{}", l.csv_row());
    }
    s
}
