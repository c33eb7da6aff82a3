//! `cars`: concept-aware radiograph synthesis pipeline.

mod config;
mod evaluate;
mod manifest;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use cars_core::perturb::PerturbationType;
use clap::{Args, Parser, Subcommand};

use crate::config::PipelineConfig;
use crate::evaluate::{MethodPath, PredictionSpec};

#[derive(Parser)]
#[command(
    name = "cars",
    version,
    about = "Concept-aware radiograph synthesis and evaluation"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML pipeline configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Concept vocabulary JSON (defaults to the bundled vocabulary).
    #[arg(long, global = true)]
    vocab: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// `mock` or the base URL of an editor service.
    #[arg(long, global = true, env = "CARS_BACKEND_URL")]
    backend: Option<String>,
    #[arg(long, global = true)]
    max_in_flight: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Convert free-text reports into concept vectors and labels.
    Annotate {
        #[arg(long)]
        reports: PathBuf,
    },
    /// Draw intra-class, insertion and deletion perturbations.
    Perturb {
        #[arg(long)]
        annotations: PathBuf,
        /// Comma-separated subset of intra_class, insertion, deletion.
        #[arg(long, value_delimiter = ',')]
        types: Option<Vec<PerturbationType>>,
        #[arg(long)]
        max_per_type: Option<usize>,
    },
    /// Edit source images according to a perturbation manifest.
    Generate {
        #[arg(long)]
        perturbations: PathBuf,
        /// Directory holding `<image_id>.png` source images.
        #[arg(long)]
        images: PathBuf,
    },
    /// Multi-label stratified train/val(/test) split.
    Split {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
    },
    /// Undersample unremarkable studies, or draw a uniform sample with `--n`.
    Sample {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        factor: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Compute evaluation tables.
    #[command(subcommand)]
    Evaluate(EvaluateCommand),
    /// Export a blank expert-review sheet for a sample of synthetic images.
    ReviewExport {
        /// `METHOD=pairs.jsonl`, repeatable.
        #[arg(long = "pairs", required = true)]
        pairs: Vec<MethodPath>,
        /// Images per method.
        #[arg(long)]
        n: usize,
        /// Rater ids; one row per image and rater. Blank when omitted.
        #[arg(long, value_delimiter = ',')]
        raters: Vec<String>,
    },
    /// Render demo radiographs (`<image_id>.png`) for a report manifest.
    SynthImages {
        #[arg(long)]
        reports: PathBuf,
        #[arg(long, default_value_t = cars_core::synth::RADIOGRAPH_SIZE)]
        size: u32,
    },
}

#[derive(Subcommand)]
enum EvaluateCommand {
    /// Macro AUROC, AUPRC and F1 with deltas against the baseline.
    Classification {
        #[arg(long)]
        truth: PathBuf,
        /// Truth for the validation predictions used to tune thresholds.
        #[arg(long)]
        val_truth: Option<PathBuf>,
        /// `VARIANT:MODEL=test.csv[@val.csv]`, repeatable; one variant must be `baseline`.
        #[arg(long = "pred", required = true)]
        predictions: Vec<PredictionSpec>,
    },
    /// Predictive entropy and ECE with deltas against the baseline.
    Calibration {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long = "pred", required = true)]
        predictions: Vec<PredictionSpec>,
        /// Pool all (image, label) cells instead of macro-averaging labels.
        #[arg(long)]
        pooled: bool,
        #[arg(long, default_value_t = cars_core::metrics::DEFAULT_ECE_BINS)]
        bins: usize,
    },
    /// SSIM between source and synthetic images.
    Ssim {
        #[arg(long = "pairs", required = true)]
        pairs: Vec<MethodPath>,
    },
    /// Concepts recovered by the backend's describer versus intended concepts.
    Semantic {
        #[arg(long = "pairs", required = true)]
        pairs: Vec<MethodPath>,
    },
    /// Expert-review distributions and inter-rater agreement.
    Review {
        #[arg(long = "sheet", required = true)]
        sheets: Vec<PathBuf>,
    },
}

fn resolve_config(g: &GlobalArgs) -> Result<PipelineConfig> {
    let mut c = match &g.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = &g.vocab {
        c.vocabulary = Some(v.clone());
    }
    if let Some(s) = g.seed {
        c.seed = s;
    }
    if let Some(o) = &g.out_dir {
        c.out_dir = o.clone();
    }
    if let Some(b) = &g.backend {
        c.backend = b.clone();
    }
    if let Some(m) = g.max_in_flight {
        c.max_in_flight = m;
    }
    Ok(c)
}

fn run(cli: Cli) -> Result<usize> {
    let mut config = resolve_config(&cli.global)?;
    match &cli.command {
        Command::Perturb {
            types,
            max_per_type,
            ..
        } => {
            if let Some(t) = types {
                config.perturbation_types = t.clone();
            }
            if let Some(m) = max_per_type {
                config.max_per_type = *m;
            }
        }
        Command::Split {
            fractions: Some(f), ..
        } => config.split_fractions = f.clone(),
        Command::Sample {
            factor: Some(f), ..
        } => config.undersample_factor = *f,
        _ => {}
    }
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir)?;

    match cli.command {
        Command::Annotate { reports } => pipeline::annotate(&config, &reports),
        Command::Perturb { annotations, .. } => pipeline::perturb(&config, &annotations),
        Command::Generate {
            perturbations,
            images,
        } => pipeline::generate(&config, &perturbations, &images),
        Command::Split { annotations, .. } => pipeline::split(&config, &annotations),
        Command::Sample { annotations, n, .. } => pipeline::sample(&config, &annotations, n),
        Command::SynthImages { reports, size } => pipeline::synth_images(&config, &reports, size),
        Command::ReviewExport { pairs, n, raters } => {
            evaluate::review_export(&config, &pairs, n, &raters)
        }
        Command::Evaluate(e) => match e {
            EvaluateCommand::Classification {
                truth,
                val_truth,
                predictions,
            } => evaluate::classification(&config, &truth, val_truth.as_deref(), &predictions),
            EvaluateCommand::Calibration {
                truth,
                predictions,
                pooled,
                bins,
            } => evaluate::calibration(&config, &truth, &predictions, pooled, bins),
            EvaluateCommand::Ssim { pairs } => evaluate::ssim(&config, &pairs),
            EvaluateCommand::Semantic { pairs } => evaluate::semantic(&config, &pairs),
            EvaluateCommand::Review { sheets } => evaluate::review(&config, &sheets),
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failures) => {
            eprintln!("{failures} row(s) failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
