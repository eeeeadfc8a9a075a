//! Command-line front end: feature extraction, evaluation over repeated
//! splits, per-layer ablation, cross-database tests and single-image
//! prediction.
//!
//! Exit codes: 0 success, 1 configuration error, 2 partial data failure
//! (unreadable images, missing features, damaged cache), 3 numerical failure.

mod config;
mod experiment;
mod extract;
mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::features::load_cache;
use crate::graph_runtime::{load_model, ModelSpec};
use crate::regressors::QualityModel;

pub use config::{ExperimentConfig, RegressorArg, RunArgs, Schema, Switch, DEFAULT_CHECKPOINT, DEFAULT_SPLITS};
pub use experiment::{
    cmd_ablate, cmd_cross, cmd_eval, cmd_split, cmd_train, evaluate_series, evaluate_split, fit_with_search,
    splits_csv, AblationRun, CrossRun, EvalRun, FitOptions, Fitted, LabeledData, SplitOutcome,
};
pub use extract::{cmd_extract, describe_image, ExtractSummary};
pub use report::{ReportRow, ReportTable, ALL_CONCATENATED};

#[derive(Debug, Parser)]
#[command(name = "nriqa", version, about = "Image quality prediction from pooled Inception features")]
pub struct Cli {
    /// More log output (-v debug, -vv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract descriptors for every manifest image into the feature cache.
    Extract(RunArgs),
    /// Train and test over repeated random splits.
    Eval(RunArgs),
    /// Evaluate every layer on its own and all layers concatenated.
    Ablate(RunArgs),
    /// Train on one database and test on another.
    Cross(RunArgs),
    /// Fit a model on a whole database and save it.
    Train(RunArgs),
    /// Predict the quality of one image.
    Predict(PredictArgs),
    /// Write the split plans as CSV.
    Split(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    /// Model file written by `train` or `cross --model-out`.
    #[arg(long)]
    pub model: PathBuf,
    /// Image to score; needs --model-spec.
    #[arg(long, conflicts_with = "id")]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub model_spec: Option<PathBuf>,
    /// Score a cached descriptor instead of an image; needs --cache.
    #[arg(long, requires = "cache")]
    pub id: Option<String>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Clamp the prediction to the MOS range.
    #[arg(long)]
    pub clamp: bool,
}

pub fn cmd_predict(args: &PredictArgs) -> Result<f64> {
    let model = QualityModel::load(&args.model)?;
    let raw = match (&args.image, &args.id) {
        (Some(path), None) => {
            let spec_path = args
                .model_spec
                .as_ref()
                .ok_or_else(|| Error::Config("--image needs --model-spec".into()))?;
            let handle = load_model(&ModelSpec::from_file(spec_path)?)?;
            let id = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            model.score(&describe_image(&handle, &id, path)?)?
        }
        (None, Some(id)) => {
            let cache = args.cache.as_ref().ok_or_else(|| Error::Config("--id needs --cache".into()))?;
            let table = load_cache(cache)?;
            let v = table
                .get(id)
                .ok_or_else(|| Error::MissingFeatures(format!("`{id}` is not in {}", cache.display())))?;
            model.score(v)?
        }
        _ => return Err(Error::Config("pass exactly one of --image or --id".into())),
    };
    let [lo, hi] = crate::datasets::MOS_RANGE;
    Ok(if args.clamp { raw.clamp(lo, hi) } else { raw })
}

/// Runs one command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Extract(a) => {
            let s = cmd_extract(&ExperimentConfig::from_args(&a)?)?;
            println!(
                "{} rows x {} dims in {}; extracted {}, skipped {}, failed {}; {:.2}s ({:.2} images/s)",
                s.rows,
                s.dim,
                s.cache.display(),
                s.extracted,
                s.skipped,
                s.failed.len(),
                s.seconds,
                s.images_per_second()
            );
            for (id, reason) in &s.failed {
                println!("failed\t{id}\t{reason}");
            }
            Ok(if s.failed.is_empty() { 0 } else { 2 })
        }
        Command::Eval(a) => {
            let r = cmd_eval(&ExperimentConfig::from_args(&a)?)?;
            print!("{}", r.table.to_markdown());
            Ok(if r.row().n_effective == 0 { 3 } else { 0 })
        }
        Command::Ablate(a) => {
            let r = cmd_ablate(&ExperimentConfig::from_args(&a)?)?;
            print!("{}", r.table.to_markdown());
            Ok(if r.table.rows.iter().all(|row| row.n_effective == 0) { 3 } else { 0 })
        }
        Command::Cross(a) => {
            let r = cmd_cross(&ExperimentConfig::from_args(&a)?)?;
            match (r.plcc, r.srocc) {
                (Some(p), Some(s)) => {
                    println!("PLCC {p:.4}  SROCC {s:.4}  ({})", r.hyperparams);
                    Ok(0)
                }
                _ => {
                    println!("{}", r.status);
                    Ok(3)
                }
            }
        }
        Command::Train(a) => {
            let (m, path) = cmd_train(&ExperimentConfig::from_args(&a)?)?;
            println!("{} model ({}) written to {}", m.regressor.kind(), m.hyperparams, path.display());
            Ok(0)
        }
        Command::Predict(a) => {
            println!("{}", cmd_predict(&a)?);
            Ok(0)
        }
        Command::Split(a) => {
            let files = cmd_split(&ExperimentConfig::from_args(&a)?)?;
            println!("{} split plans written to {}", files.len(), files[0].parent().unwrap().display());
            Ok(0)
        }
    }
}
