//! The `sgg` command line: synthetic data generation, training, evaluation
//! and fixture inspection.

use std::ffi::OsString;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use sgg_core::config::RunConfig;
use sgg_core::data::synthetic::generate_synthetic;
use sgg_core::params::read_checkpoint_from;
use sgg_core::train::{evaluate_model, load_model, loss_csv, Dataset, Trainer};
use sgg_core::{Result, SggError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_ECHO_FILE: &str = "config.txt";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSS_LOG_FILE: &str = "loss.csv";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const PLOT_FILE: &str = "per_predicate.csv";

#[derive(Debug, Parser)]
#[command(name = "sgg", version, about = "Scene-graph set prediction on synthetic videos")]
pub struct Cli {
    /// Seed for data generation, initialization and shuffling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Source of query content: cue embeddings or zeros.
    #[arg(long, global = true, value_parser = ["vlm", "zero"])]
    pub content_source: Option<String>,
    /// Memory of the predicate decoder: the cue bank or the image encoding.
    #[arg(long, global = true, value_parser = ["bank", "image"])]
    pub predicate_memory: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    GenData(Overrides),
    /// Train a model on a dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[command(flatten)]
        rest: Overrides,
    },
    /// Evaluate a checkpoint and write reports.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated modes: predcls, sgcls, sgdet.
        #[arg(long)]
        mode: Option<String>,
        /// Comma-separated constraint settings: with, no.
        #[arg(long)]
        constraint: Option<String>,
        /// Comma-separated K values.
        #[arg(long)]
        k: Option<String>,
        #[command(flatten)]
        rest: Overrides,
    },
    /// Pretty-print a data, config, vocabulary or checkpoint file.
    Inspect { path: PathBuf },
}

/// Any config key as `--key value` or `--key=value`.
#[derive(Debug, Args)]
pub struct Overrides {
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    pub overrides: Vec<String>,
}

/// Splits `--key value` / `--key=value` tokens into pairs; dashes in keys
/// become underscores.
pub fn parse_overrides(tokens: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = tokens.iter();
    while let Some(t) = it.next() {
        let Some(flag) = t.strip_prefix("--") else {
            return Err(SggError::Config(format!("expected `--key value`, got `{t}`")));
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| SggError::Config(format!("flag `--{flag}` needs a value")))?;
                (flag.to_string(), v.clone())
            }
        };
        out.push((key.replace('-', "_"), value));
    }
    Ok(out)
}

/// Config file, then subcommand overrides, then the global flags.
pub fn resolve_config(cli: &Cli, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for (k, v) in parse_overrides(overrides)? {
        cfg.set(&k, &v)?;
    }
    if let Some(s) = cli.seed {
        cfg.set("seed", &s.to_string())?;
    }
    if let Some(c) = &cli.content_source {
        cfg.set("content_source", c)?;
    }
    if let Some(m) = &cli.predicate_memory {
        cfg.set("predicate_memory", m)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli, default: &str) -> Result<PathBuf> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(default));
    std::fs::create_dir_all(&dir).map_err(|e| SggError::io(&dir, e))?;
    Ok(dir)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| SggError::io(path, e))
}

pub fn cmd_gen_data(cfg: &RunConfig, out: &Path) -> Result<()> {
    let ds: Dataset = generate_synthetic(&cfg.data)?.into();
    ds.save(out)?;
    let videos: std::collections::BTreeSet<&str> = ds.annotations.iter().map(|a| a.video.as_str()).collect();
    let manifest = serde_json::json!({
        "seed": cfg.seed,
        "frames": ds.len(),
        "videos": videos.len(),
        "object_classes": ds.vocab.object_count(),
        "predicate_groups": ds.vocab.group_sizes(),
        "cue_noise": cfg.data.cue_noise,
        "files": [
            sgg_core::train::VOCAB_FILE,
            sgg_core::train::ANNOTATION_FILE,
            sgg_core::train::CUE_FILE,
            sgg_core::train::FRAME_FILE,
        ],
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write(&out.join(MANIFEST_FILE), &text)?;
    write(&out.join(CONFIG_ECHO_FILE), &cfg.to_text())?;
    info!("wrote {} frames to {}", ds.len(), out.display());
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig, data: &Path, resume: Option<&Path>, out: &Path) -> Result<()> {
    let ds = Dataset::load(data)?;
    let mut trainer = Trainer::new(cfg.clone(), &ds)?;
    if let Some(p) = resume {
        trainer.resume(p)?;
        info!("resumed at step {}", trainer.step);
    }
    let every = (cfg.train.steps / 20).max(1);
    let logs = trainer.run(|l| {
        if l.step % every == 0 {
            info!("step {} loss {:.6}", l.step, l.loss.total());
        }
    })?;
    write(&out.join(LOSS_LOG_FILE), &loss_csv(&logs))?;
    trainer.save_checkpoint(&out.join(CHECKPOINT_FILE))?;
    write(&out.join(CONFIG_ECHO_FILE), &cfg.to_text())?;
    if let Some(last) = logs.last() {
        info!("final loss {:.6} after {} steps", last.loss.total(), trainer.step);
    }
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig, data: &Path, checkpoint: &Path, out: &Path) -> Result<()> {
    let ds = Dataset::load(data)?;
    let model = load_model(cfg, checkpoint)?;
    let report = evaluate_model(&model, &ds, cfg)?;
    write(&out.join(REPORT_TEXT_FILE), &report.to_text())?;
    write(&out.join(REPORT_JSON_FILE), &report.to_json())?;
    write(&out.join(PLOT_FILE), &report.plot_csv())?;
    write(&out.join(CONFIG_ECHO_FILE), &cfg.to_text())?;
    print!("{}", report.to_text());
    Ok(())
}

/// Renders a file for reading: JSON lines pretty-printed record by record,
/// checkpoints as a parameter table, anything else verbatim.
pub fn inspect(path: &Path) -> Result<String> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| SggError::io(path, e))?;
    let origin = path.display().to_string();
    if bytes.starts_with(b"sgg-checkpoint") {
        let entries = read_checkpoint_from(&bytes[..], &origin)?;
        let mut s = format!("checkpoint with {} tensors\n", entries.len());
        for (name, t) in &entries {
            let mean = if t.data().is_empty() {
                0.0
            } else {
                t.sum() / t.data().len() as f64
            };
            s.push_str(&format!(
                "{name:<32} {:>4} x {:<4} mean {mean:+.6} max|.| {:.6}\n",
                t.rows(),
                t.cols(),
                t.max_abs()
            ));
        }
        return Ok(s);
    }
    let text = String::from_utf8(bytes).map_err(|_| SggError::Parse {
        path: origin.clone(),
        line: 0,
        message: "not UTF-8 text and not a checkpoint".into(),
    })?;
    let is_jsonl = path.extension().is_some_and(|e| e == "jsonl");
    let is_json = path.extension().is_some_and(|e| e == "json");
    if is_jsonl || is_json {
        let mut s = String::new();
        let records: Vec<(usize, String)> = if is_json {
            vec![(1, text.clone())]
        } else {
            BufReader::new(text.as_bytes())
                .lines()
                .map_while(std::io::Result::ok)
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| (i + 1, l))
                .collect()
        };
        for (line, rec) in &records {
            let v: serde_json::Value = serde_json::from_str(rec).map_err(|e| SggError::Parse {
                path: origin.clone(),
                line: *line,
                message: e.to_string(),
            })?;
            if is_jsonl {
                s.push_str(&format!("# record {line}\n"));
            }
            s.push_str(&serde_json::to_string_pretty(&v).expect("value serializes"));
            s.push('\n');
        }
        if is_jsonl {
            s.push_str(&format!("{} records\n", records.len()));
        }
        return Ok(s);
    }
    Ok(text)
}

pub fn run_cli(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(o) => {
            let cfg = resolve_config(cli, &o.overrides)?;
            cmd_gen_data(&cfg, &out_dir(cli, "data")?)
        }
        Command::Train { data, resume, rest } => {
            let cfg = resolve_config(cli, &rest.overrides)?;
            cmd_train(&cfg, data, resume.as_deref(), &out_dir(cli, "run")?)
        }
        Command::Eval {
            data,
            checkpoint,
            mode,
            constraint,
            k,
            rest,
        } => {
            let mut tokens = rest.overrides.clone();
            for (key, v) in [("eval_modes", mode), ("eval_constraints", constraint), ("eval_ks", k)] {
                if let Some(v) = v {
                    tokens.push(format!("--{key}={v}"));
                }
            }
            let cfg = resolve_config(cli, &tokens)?;
            cmd_eval(&cfg, data, checkpoint, &out_dir(cli, "eval")?)
        }
        Command::Inspect { path } => {
            print!("{}", inspect(path)?);
            Ok(())
        }
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USER } else { EXIT_OK };
        }
    };
    match run_cli(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                EXIT_USER
            } else {
                EXIT_INTERNAL
            }
        }
    }
}

