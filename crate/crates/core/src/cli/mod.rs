//! Batch command-line front end.

mod commands;
mod config;
mod data;
mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use msm::eval::{LimitedMode, Metric};
use msm::{Error, Result};

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "msm", version, about = "Masked scene modeling: data, pretraining and frozen-feature probes")]
pub struct Cli {
    /// Worker threads for scene-level parallelism; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Root seed; overrides `train.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML run configuration. Any `--section.key value` flag overrides it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Linear,
    Nn,
    Instance,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    MaskRatio,
    Masking,
    Supervision,
    Strategy,
    Layers,
    NnMetric,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Writes synthetic PLY scenes and a train/val manifest.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        scenes: usize,
    },
    /// Self-supervised pretraining on the train split.
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch metrics table (default: checkpoint path with a .tsv extension).
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Continue from the checkpoint at --out if it exists.
        #[arg(long)]
        resume: bool,
        /// Stop after this many completed epochs.
        #[arg(long)]
        stop_after: Option<usize>,
        #[arg(long)]
        verbose: bool,
    },
    /// Writes one feature dump per scene under OUT/train and OUT/val.
    Features {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated decoder levels or `all`.
        #[arg(long, default_value = "all")]
        levels: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains a probe on frozen feature dumps and reports validation scores.
    Probe {
        #[arg(long, value_enum)]
        task: Task,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        /// Scene directory holding the PLY files (needed by the nn and instance tasks).
        #[arg(long)]
        scenes: Option<PathBuf>,
        #[arg(long)]
        metric: Option<Metric>,
        /// Reduced training annotations: `scenes:FRACTION` or `points:COUNT`.
        #[arg(long)]
        limited: Option<LimitedMode>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Colors a scene by the top principal components of its features.
    VizPca {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "all")]
        levels: String,
    },
    /// Runs one ablation sweep and reports validation mIoU per variant.
    Ablate {
        #[arg(long, value_enum)]
        which: Ablation,
        #[arg(long)]
        data: PathBuf,
        /// Model to probe for the layers and nn-metric sweeps (pretrained when absent).
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Pulls `--section.key value`, `--section.key=value` and bare `--section.key` (true)
/// config overrides out of the argument list.
pub fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>)> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter().peekable();
    while let Some(a) = it.next() {
        let Some(flag) = a.strip_prefix("--") else {
            rest.push(a);
            continue;
        };
        let (name, inline) = match flag.split_once('=') {
            Some((n, v)) => (n.to_string(), Some(v.to_string())),
            None => (flag.to_string(), None),
        };
        if !name.contains('.') {
            rest.push(a);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => match it.peek() {
                Some(next) if !next.starts_with("--") => it.next().expect("peeked"),
                _ => "true".to_string(),
            },
        };
        overrides.push((name, value));
    }
    Ok((rest, overrides))
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Spec(_) => 2,
        Error::Numeric(_) => 4,
        Error::Io(_)
        | Error::Format(_)
        | Error::EmptyScene(_)
        | Error::Checkpoint(_)
        | Error::Range(_)
        | Error::DegenerateInput(_)
        | Error::DegenerateView(_)
        | Error::DegenerateBatch(_) => 3,
        Error::Shape(_) | Error::Contract(_) => 1,
    }
}

pub fn run(cli: Cli, overrides: &[(String, String)]) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), overrides)?;
    if let Some(s) = cli.seed {
        cfg.train.seed = s;
    }
    let jobs = cli.jobs.max(1);
    match cli.command {
        Command::GenData { out, scenes } => commands::gen_data(&out, scenes, cli.seed.unwrap_or(0), jobs),
        Command::Pretrain { data, out, metrics, resume, stop_after, verbose } => {
            commands::pretrain(&cfg, &data, &out, metrics, resume, stop_after, verbose, jobs)
        }
        Command::Features { ckpt, data, levels, out } => commands::features(&cfg, &ckpt, &data, &levels, &out, jobs),
        Command::Probe { task, train, val, scenes, metric, limited, out } => {
            if let Some(m) = metric {
                cfg.probe.metric = m;
            }
            commands::probe(&cfg, task, &train, &val, scenes.as_deref(), limited, out.as_deref(), jobs)
        }
        Command::VizPca { ckpt, scene, out, levels } => commands::viz_pca(&cfg, &ckpt, &scene, &out, &levels),
        Command::Ablate { which, data, ckpt, out } => commands::ablate(&cfg, which, &data, ckpt.as_deref(), out.as_deref(), jobs),
    }
}
