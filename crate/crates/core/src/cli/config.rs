use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;

use crate::datasets::{load_manifest, load_manifest_detect, DatasetManifest, DistortionKind, DEFAULT_FRACTIONS};
use crate::error::{Error, Result};
use crate::regressors::{HyperparamGrid, RegressorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schema {
    /// Artificial when every row has a ref_id, authentic when none has.
    #[default]
    Auto,
    Authentic,
    Artificial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressorArg {
    Svr,
    Gpr,
}

impl From<RegressorArg> for RegressorKind {
    fn from(r: RegressorArg) -> Self {
        match r {
            RegressorArg::Svr => RegressorKind::Svr,
            RegressorArg::Gpr => RegressorKind::Gpr,
        }
    }
}

/// Options shared by the experiment subcommands. Every option can also be
/// set in the `--config` TOML file under the same name with `-` replaced by
/// `_`; a flag given on the command line wins over the file.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunArgs {
    /// TOML file with default values for these options.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Model spec sidecar (TOML) of the exported graph.
    #[arg(long)]
    pub model_spec: Option<PathBuf>,
    /// Database manifest CSV (`image_id,path,mos,ref_id`).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub schema: Option<Schema>,
    /// Second database for `cross`.
    #[arg(long)]
    pub test_manifest: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub test_schema: Option<Schema>,
    /// Binary feature cache.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Feature cache of the second database (defaults to `--cache`).
    #[arg(long)]
    pub test_cache: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub regressor: Option<RegressorArg>,
    /// Number of random splits.
    #[arg(long)]
    pub splits: Option<usize>,
    /// Base seed; split i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Z-score features with statistics of the training rows.
    #[arg(long, value_enum)]
    pub standardize: Option<Switch>,
    /// Hyperparameter grid (TOML).
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for extraction and for parallel splits.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Evaluate a single layer instead of the concatenated descriptor.
    #[arg(long)]
    pub layer: Option<String>,
    /// Extract at most this many new images.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Save the cache after every N extracted images.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Where `train` and `cross` write the fitted model (JSON).
    #[arg(long)]
    pub model_out: Option<PathBuf>,
}

impl RunArgs {
    /// Values from the command line, then from the config file.
    fn merged(&self) -> Result<RunArgs> {
        let Some(path) = &self.config else {
            return Ok(self.clone());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut file: RunArgs =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut file.model_spec,
            &mut file.manifest,
            &mut file.test_manifest,
            &mut file.cache,
            &mut file.test_cache,
            &mut file.grid,
            &mut file.out,
            &mut file.model_out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(RunArgs {
            config: self.config.clone(),
            model_spec: self.model_spec.clone().or(file.model_spec),
            manifest: self.manifest.clone().or(file.manifest),
            schema: self.schema.or(file.schema),
            test_manifest: self.test_manifest.clone().or(file.test_manifest),
            test_schema: self.test_schema.or(file.test_schema),
            cache: self.cache.clone().or(file.cache),
            test_cache: self.test_cache.clone().or(file.test_cache),
            regressor: self.regressor.or(file.regressor),
            splits: self.splits.or(file.splits),
            seed: self.seed.or(file.seed),
            standardize: self.standardize.or(file.standardize),
            grid: self.grid.clone().or(file.grid),
            out: self.out.clone().or(file.out),
            workers: self.workers.or(file.workers),
            layer: self.layer.clone().or(file.layer),
            limit: self.limit.or(file.limit),
            checkpoint_every: self.checkpoint_every.or(file.checkpoint_every),
            model_out: self.model_out.clone().or(file.model_out),
        })
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model_spec: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub schema: Schema,
    pub test_manifest: Option<PathBuf>,
    pub test_schema: Schema,
    pub cache: Option<PathBuf>,
    pub test_cache: Option<PathBuf>,
    pub regressor: RegressorKind,
    pub grid: HyperparamGrid,
    pub splits: usize,
    pub seed: u64,
    pub fractions: [f64; 3],
    pub standardize: bool,
    pub out: PathBuf,
    pub workers: usize,
    pub layer: Option<String>,
    pub limit: Option<usize>,
    pub checkpoint_every: usize,
    pub model_out: Option<PathBuf>,
}

pub const DEFAULT_SPLITS: usize = 100;
pub const DEFAULT_CHECKPOINT: usize = 256;

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model_spec: None,
            manifest: None,
            schema: Schema::Auto,
            test_manifest: None,
            test_schema: Schema::Auto,
            cache: None,
            test_cache: None,
            regressor: RegressorKind::Svr,
            grid: HyperparamGrid::default(),
            splits: DEFAULT_SPLITS,
            seed: 0,
            fractions: DEFAULT_FRACTIONS,
            standardize: true,
            out: PathBuf::from("results"),
            workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            layer: None,
            limit: None,
            checkpoint_every: DEFAULT_CHECKPOINT,
            model_out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_args(args: &RunArgs) -> Result<Self> {
        let a = args.merged()?;
        let d = ExperimentConfig::default();
        let grid = match &a.grid {
            Some(p) => HyperparamGrid::from_file(p)?,
            None => HyperparamGrid::default(),
        };
        let cfg = ExperimentConfig {
            model_spec: a.model_spec,
            manifest: a.manifest,
            schema: a.schema.unwrap_or_default(),
            test_manifest: a.test_manifest,
            test_schema: a.test_schema.unwrap_or_default(),
            test_cache: a.test_cache.or_else(|| a.cache.clone()),
            cache: a.cache,
            regressor: a.regressor.map(Into::into).unwrap_or(d.regressor),
            grid,
            splits: a.splits.unwrap_or(d.splits),
            seed: a.seed.unwrap_or(d.seed),
            fractions: d.fractions,
            standardize: a.standardize.map(|s| s == Switch::On).unwrap_or(d.standardize),
            out: a.out.unwrap_or(d.out),
            workers: a.workers.unwrap_or(d.workers),
            layer: a.layer,
            limit: a.limit,
            checkpoint_every: a.checkpoint_every.unwrap_or(d.checkpoint_every),
            model_out: a.model_out,
        };
        if cfg.splits == 0 {
            return Err(Error::Config("split count must be at least 1".into()));
        }
        if cfg.workers == 0 {
            return Err(Error::Config("worker count must be at least 1".into()));
        }
        if cfg.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint interval must be at least 1".into()));
        }
        Ok(cfg)
    }

    /// Path of a required option, checked to exist.
    pub fn existing(&self, value: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
        let p = value
            .clone()
            .ok_or_else(|| Error::Config(format!("--{flag} is required")))?;
        if !p.exists() {
            return Err(Error::Config(format!("--{flag} {} does not exist", p.display())));
        }
        Ok(p)
    }

    pub fn required(&self, value: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
        value.clone().ok_or_else(|| Error::Config(format!("--{flag} is required")))
    }

    pub fn load_manifest(&self) -> Result<DatasetManifest> {
        load_with_schema(&self.existing(&self.manifest, "manifest")?, self.schema)
    }

    pub fn load_test_manifest(&self) -> Result<DatasetManifest> {
        load_with_schema(&self.existing(&self.test_manifest, "test-manifest")?, self.test_schema)
    }

    pub fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
    }
}

fn load_with_schema(path: &Path, schema: Schema) -> Result<DatasetManifest> {
    match schema {
        Schema::Auto => load_manifest_detect(path),
        Schema::Authentic => load_manifest(path, DistortionKind::Authentic),
        Schema::Artificial => load_manifest(path, DistortionKind::Artificial),
    }
}
