//! `histotile`: command-line front end to the histology patch pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use histotile_core::dataset::SplitRatios;
use histotile_core::pipeline::{self, PipelineConfig, StageSummary};

/// Environment variable capping the number of worker threads.
const THREADS_ENV: &str = "HISTOTILE_THREADS";

#[derive(Parser, Debug)]
#[command(name = "histotile", version, about = "Patch-based H&E breast histology classification")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stain-normalize the input images against the target statistics.
    Normalize,
    /// Cut normalized images into overlapping square patches.
    Tile,
    /// Add rotated and flipped variants of training patches.
    Augment,
    /// Stratified train/validation/test split of the images.
    Split,
    /// Train the patch classifier.
    Train,
    /// Classify the held-out patches.
    Predict,
    /// Import patch predictions produced elsewhere.
    IngestPredictions {
        /// CSV with the patch prediction columns.
        csv: PathBuf,
    },
    /// Majority vote of patch predictions per image.
    Aggregate,
    /// Accuracy and per-class ROC of the predictions.
    Evaluate,
    /// Every stage from normalization to evaluation.
    RunAll,
}

/// Settings that override the configuration file.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,
    /// Directory with `manifest.jsonl` or one sub-directory of PNGs per class.
    #[arg(long, global = true)]
    input_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    patch_size: Option<usize>,
    /// Fraction of the patch side shared by neighbouring patches.
    #[arg(long, global = true)]
    overlap: Option<f64>,
    /// Train, validation and test fractions, e.g. `0.6,0.2,0.2`.
    #[arg(long, global = true, value_parser = parse_ratios)]
    ratios: Option<SplitRatios>,
    #[arg(long, global = true)]
    target_image: Option<PathBuf>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    momentum: Option<f64>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
}

fn parse_ratios(s: &str) -> std::result::Result<SplitRatios, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match parts[..] {
        [train, validation, test] => SplitRatios::new(train, validation, test).map_err(|e| e.to_string()),
        _ => Err(format!("expected three comma-separated fractions, got {}", parts.len())),
    }
}

impl Overrides {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)
                .with_context(|| format!("reading configuration {}", path.display()))?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.work_dir {
            cfg.work_dir = v.clone();
        }
        if let Some(v) = &self.input_dir {
            cfg.input_dir = Some(v.clone());
        }
        if let Some(v) = self.patch_size {
            cfg.grid.patch_size = v;
        }
        if let Some(v) = self.overlap {
            cfg.grid.overlap_fraction = v;
        }
        if let Some(v) = self.ratios {
            cfg.ratios = v;
        }
        if let Some(v) = &self.target_image {
            cfg.target_image = Some(v.clone());
        }
        if let Some(v) = self.epochs {
            cfg.model.max_epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.model.learning_rate = v;
        }
        if let Some(v) = self.momentum {
            cfg.model.momentum = v;
        }
        if let Some(v) = self.batch_size {
            cfg.model.batch_size = v;
        }
        cfg.validate().context("invalid configuration")?;
        Ok(cfg)
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("{THREADS_ENV}={raw:?} is not a thread count"))?;
    if n == 0 {
        bail!("{THREADS_ENV} must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the worker pool")
}

fn run(cli: Cli) -> Result<Vec<StageSummary>> {
    configure_threads()?;
    let cfg = cli.overrides.resolve()?;
    std::fs::create_dir_all(&cfg.work_dir)
        .with_context(|| format!("creating work directory {}", cfg.work_dir.display()))?;
    let one = |s: histotile_core::Result<StageSummary>| s.map(|s| vec![s]);
    let out = match cli.command {
        Command::Normalize => one(pipeline::normalize(&cfg)),
        Command::Tile => one(pipeline::tile(&cfg)),
        Command::Augment => one(pipeline::augment(&cfg)),
        Command::Split => one(pipeline::split(&cfg)),
        Command::Train => one(pipeline::train_model(&cfg)),
        Command::Predict => one(pipeline::predict_patches(&cfg)),
        Command::IngestPredictions { csv } => one(pipeline::ingest_predictions(&cfg, &csv)),
        Command::Aggregate => one(pipeline::aggregate(&cfg)),
        Command::Evaluate => one(pipeline::evaluate(&cfg)),
        Command::RunAll => pipeline::run_all(&cfg),
    }?;
    Ok(out)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summaries) => {
            for s in summaries {
                println!("{s}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}

/// The error chain joined by `: `, skipping causes the message above
/// already spells out.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !msg.contains(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
    }
    msg
}
