//! Run configuration: flat `key = value` text with strict key checking.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::synthetic::SyntheticConfig;
use crate::error::{Result, SggError};
use crate::losses::LossWeights;
use crate::metrics::{ConstraintScope, EvalSettings, Mode};
use crate::model::{ModelConfig, Switches};

/// Optimizer and loop settings.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    /// Frames per optimizer step.
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.0,
            grad_clip: 0.0,
            batch_size: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub loss: LossWeights,
    pub data: SyntheticConfig,
    pub train: TrainConfig,
    pub eval: EvalSettings,
    pub switches: Switches,
    /// Seed of the hashed embedding space, kept apart from `seed` so that
    /// label embeddings stay fixed across runs.
    pub embedding_seed: u64,
    pub embedding_table: Option<PathBuf>,
    pub anchors: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut c = RunConfig {
            seed: 0,
            model: ModelConfig::default(),
            loss: LossWeights::default(),
            data: SyntheticConfig::default(),
            train: TrainConfig::default(),
            eval: EvalSettings::default(),
            switches: Switches::default(),
            embedding_seed: 0,
            embedding_table: None,
            anchors: None,
        };
        c.sync();
        c
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| SggError::Config(format!("bad value `{value}` for `{key}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn parse_constraint(key: &str, value: &str) -> Result<bool> {
    match value {
        "with" => Ok(true),
        "no" => Ok(false),
        _ => Err(SggError::Config(format!("`{key}` entries must be `with` or `no`, got `{value}`"))),
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(String::new, |p| p.display().to_string())
}

impl RunConfig {
    /// Every recognized key, in echo order.
    pub fn keys() -> Vec<&'static str> {
        RunConfig::default().to_pairs().into_iter().map(|(k, _)| k).collect()
    }

    /// Keeps fields shared between sections in agreement.
    fn sync(&mut self) {
        self.data.seed = self.seed;
        self.model.object_classes = self.data.object_classes;
        self.model.predicate_groups = self.data.predicate_groups;
        self.model.feature_channels = self.data.object_classes;
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let m = &mut self.model;
        let l = &mut self.loss;
        let t = &mut self.train;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "queries" => m.queries = parse(key, v)?,
            "model_dim" => m.model_dim = parse(key, v)?,
            "embed_dim" => m.embed_dim = parse(key, v)?,
            "layers" => m.layers = parse(key, v)?,
            "heads" => m.heads = parse(key, v)?,
            "ff_dim" => m.ff_dim = parse(key, v)?,
            "n_ref" => m.n_ref = parse(key, v)?,
            "object_classes" => self.data.object_classes = parse(key, v)?,
            "predicate_groups" => {
                let g: Vec<usize> = parse_list(key, v)?;
                self.data.predicate_groups = g.try_into().map_err(|g: Vec<usize>| {
                    SggError::Config(format!("`predicate_groups` needs 3 sizes, got {}", g.len()))
                })?;
            }
            "alpha_sub" => l.alpha_sub = parse(key, v)?,
            "alpha_obj" => l.alpha_obj = parse(key, v)?,
            "alpha_pred" => l.alpha_pred = parse(key, v)?,
            "beta" => l.beta = parse(key, v)?,
            "lambda_l1" => l.lambda_l1 = parse(key, v)?,
            "lambda_giou" => l.lambda_giou = parse(key, v)?,
            "focal_gamma" => l.focal_gamma = parse(key, v)?,
            "focal_alpha" => l.focal_alpha = parse(key, v)?,
            "no_object_weight" => l.no_object_weight = parse(key, v)?,
            "frames" => self.data.frames = parse(key, v)?,
            "frames_per_video" => self.data.frames_per_video = parse(key, v)?,
            "grid" => self.data.grid = parse(key, v)?,
            "zipf_exponent" => self.data.zipf_exponent = parse(key, v)?,
            "cue_noise" => self.data.cue_noise = parse(key, v)?,
            "steps" => t.steps = parse(key, v)?,
            "lr" => t.lr = parse(key, v)?,
            "beta1" => t.beta1 = parse(key, v)?,
            "beta2" => t.beta2 = parse(key, v)?,
            "adam_eps" => t.adam_eps = parse(key, v)?,
            "weight_decay" => t.weight_decay = parse(key, v)?,
            "grad_clip" => t.grad_clip = parse(key, v)?,
            "batch_size" => t.batch_size = parse(key, v)?,
            "eval_modes" => self.eval.modes = parse_list::<Mode>(key, v)?,
            "eval_constraints" => {
                self.eval.constraints = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_constraint(key, s))
                    .collect::<Result<_>>()?
            }
            "eval_ks" => self.eval.ks = parse_list(key, v)?,
            "constraint_scope" => self.eval.scope = parse::<ConstraintScope>(key, v)?,
            "iou_threshold" => self.eval.iou_threshold = parse(key, v)?,
            "content_source" => self.switches.content = parse(key, v)?,
            "predicate_memory" => self.switches.memory = parse(key, v)?,
            "embedding_seed" => self.embedding_seed = parse(key, v)?,
            "embedding_table" => self.embedding_table = opt_path(v),
            "anchors" => self.anchors = opt_path(v),
            other => {
                return Err(SggError::Config(format!("unknown config key `{other}`")));
            }
        }
        self.sync();
        Ok(())
    }

    /// All settings as `(key, value)` pairs; feeding them back through
    /// [`RunConfig::set`] reproduces the configuration.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let (m, l, d, t, e) = (&self.model, &self.loss, &self.data, &self.train, &self.eval);
        vec![
            ("seed", self.seed.to_string()),
            ("queries", m.queries.to_string()),
            ("model_dim", m.model_dim.to_string()),
            ("embed_dim", m.embed_dim.to_string()),
            ("layers", m.layers.to_string()),
            ("heads", m.heads.to_string()),
            ("ff_dim", m.ff_dim.to_string()),
            ("n_ref", m.n_ref.to_string()),
            ("object_classes", d.object_classes.to_string()),
            ("predicate_groups", join(&d.predicate_groups)),
            ("alpha_sub", l.alpha_sub.to_string()),
            ("alpha_obj", l.alpha_obj.to_string()),
            ("alpha_pred", l.alpha_pred.to_string()),
            ("beta", l.beta.to_string()),
            ("lambda_l1", l.lambda_l1.to_string()),
            ("lambda_giou", l.lambda_giou.to_string()),
            ("focal_gamma", l.focal_gamma.to_string()),
            ("focal_alpha", l.focal_alpha.to_string()),
            ("no_object_weight", l.no_object_weight.to_string()),
            ("frames", d.frames.to_string()),
            ("frames_per_video", d.frames_per_video.to_string()),
            ("grid", d.grid.to_string()),
            ("zipf_exponent", d.zipf_exponent.to_string()),
            ("cue_noise", d.cue_noise.to_string()),
            ("steps", t.steps.to_string()),
            ("lr", t.lr.to_string()),
            ("beta1", t.beta1.to_string()),
            ("beta2", t.beta2.to_string()),
            ("adam_eps", t.adam_eps.to_string()),
            ("weight_decay", t.weight_decay.to_string()),
            ("grad_clip", t.grad_clip.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("eval_modes", join(&e.modes)),
            (
                "eval_constraints",
                e.constraints
                    .iter()
                    .map(|&c| if c { "with" } else { "no" })
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("eval_ks", join(&e.ks)),
            ("constraint_scope", e.scope.to_string()),
            ("iou_threshold", e.iou_threshold.to_string()),
            ("content_source", self.switches.content.to_string()),
            ("predicate_memory", self.switches.memory.to_string()),
            ("embedding_seed", self.embedding_seed.to_string()),
            ("embedding_table", show_path(&self.embedding_table)),
            ("anchors", show_path(&self.anchors)),
        ]
    }

    /// `key = value` lines in [`RunConfig::keys`] order.
    pub fn to_text(&self) -> String {
        self.to_pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| SggError::Parse {
                path: origin.to_string(),
                line: i + 1,
                message,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            self.set(k.trim(), v).map_err(|e| match e {
                SggError::Config(m) => err(m),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_text(text, origin)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SggError::io(path, e))?;
        RunConfig::parse(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.data.validate()?;
        let t = &self.train;
        if t.batch_size == 0 {
            return Err(SggError::Config("batch_size must be >= 1".into()));
        }
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return Err(SggError::Config(format!("lr must be positive, got {}", t.lr)));
        }
        if !(0.0..1.0).contains(&t.beta1) || !(0.0..1.0).contains(&t.beta2) {
            return Err(SggError::Config("beta1 and beta2 must lie in [0, 1)".into()));
        }
        if !(t.adam_eps > 0.0) || t.weight_decay < 0.0 || t.grad_clip < 0.0 {
            return Err(SggError::Config(
                "adam_eps must be positive; weight_decay and grad_clip non-negative".into(),
            ));
        }
        if self.eval.ks.iter().any(|&k| k == 0) {
            return Err(SggError::Config("eval_ks entries must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.eval.iou_threshold) {
            return Err(SggError::Config("iou_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ContentSource, PredicateMemory};

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.set("queries", "12").unwrap();
        c.set("predicate_groups", "2,2,3").unwrap();
        c.set("eval_constraints", "with").unwrap();
        c.set("content_source", "zero").unwrap();
        c.set("anchors", "a.ckpt").unwrap();
        let back = RunConfig::parse(&c.to_text(), "echo").unwrap();
        assert_eq!(back, c);
        assert_eq!(back.model.predicate_groups, [2, 2, 3]);
        assert_eq!(back.switches.content, ContentSource::Zero);
        assert_eq!(back.switches.memory, PredicateMemory::Bank);
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let e = RunConfig::parse("# comment\n\nseed = 3\nlearning_rate = 0.1\n", "cfg").unwrap_err();
        match e {
            SggError::Parse { line, message, .. } => {
                assert_eq!(line, 4);
                assert!(message.contains("learning_rate"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_values() {
        let mut c = RunConfig::default();
        assert!(c.set("steps", "-1").is_err());
        assert!(c.set("eval_modes", "predcls,bogus").is_err());
        assert!(c.set("predicate_groups", "1,2").is_err());
        c.set("batch_size", "0").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn shared_fields_follow_data() {
        let mut c = RunConfig::default();
        c.set("object_classes", "4").unwrap();
        c.set("seed", "9").unwrap();
        assert_eq!(c.model.object_classes, 4);
        assert_eq!(c.model.feature_channels, 4);
        assert_eq!(c.data.seed, 9);
        assert_eq!(RunConfig::keys().len(), c.to_pairs().len());
    }
}
