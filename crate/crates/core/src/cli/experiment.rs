use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::report::{ReportRow, ReportTable, ALL_CONCATENATED};
use crate::datasets::{cross_pair, make_split, make_split_series, DatasetManifest, SplitPlan};
use crate::error::{Error, Result};
use crate::features::{load_cache, FeatureTable, Standardizer};
use crate::metrics::{plcc, srocc};
use crate::regressors::{
    sample_variance, search_candidates, train, GridSearchResult, HyperparamGrid, Hyperparams, QualityModel, RegressorKind,
    MODEL_FILE_VERSION,
};

/// Descriptors (optionally restricted to one layer) paired with MOS, in
/// manifest order.
pub struct LabeledData<'a> {
    pub ids: Vec<&'a str>,
    pub rows: Vec<&'a [f64]>,
    pub mos: Vec<f64>,
    pub layer: Option<String>,
    index: HashMap<&'a str, usize>,
}

impl<'a> LabeledData<'a> {
    pub fn new(table: &'a FeatureTable, manifest: &'a DatasetManifest, layer: Option<&str>) -> Result<Self> {
        let range = match layer {
            None => 0..table.dim(),
            Some(name) => {
                let s = table
                    .layout()
                    .iter()
                    .find(|s| s.layer_name == name)
                    .ok_or_else(|| Error::UnknownLayer(name.to_string()))?;
                s.offset..s.offset + s.length
            }
        };
        let mut missing = Vec::new();
        let mut data = LabeledData {
            ids: Vec::with_capacity(manifest.len()),
            rows: Vec::with_capacity(manifest.len()),
            mos: Vec::with_capacity(manifest.len()),
            layer: layer.map(str::to_string),
            index: HashMap::with_capacity(manifest.len()),
        };
        for r in &manifest.records {
            match table.get(&r.image_id) {
                Some(v) => {
                    data.index.insert(&r.image_id, data.ids.len());
                    data.ids.push(&r.image_id);
                    data.rows.push(&v.values[range.clone()]);
                    data.mos.push(r.mos);
                }
                None => missing.push(r.image_id.as_str()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingFeatures(format!(
                "{} of {} images of `{}` have no cached features (first: {}); run `extract` first",
                missing.len(),
                manifest.len(),
                manifest.name,
                missing[0]
            )));
        }
        Ok(data)
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map(|r| r.len()).unwrap_or(0)
    }

    fn indices(&self, ids: &[String]) -> Vec<usize> {
        ids.iter().map(|id| self.index[id.as_str()]).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions<'g> {
    pub kind: RegressorKind,
    pub grid: &'g HyperparamGrid,
    pub standardize: bool,
}

/// A fitted model plus the search that chose its hyperparameters.
pub struct Fitted {
    pub model: QualityModel,
    pub search: Option<GridSearchResult>,
}

fn gather(data: &LabeledData, idx: &[usize], std: Option<&Standardizer>) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let x = idx
        .iter()
        .map(|&i| match std {
            Some(s) => s.apply(data.rows[i]),
            None => Ok(data.rows[i].to_vec()),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((x, idx.iter().map(|&i| data.mos[i]).collect()))
}

fn fit_standardizer(data: &LabeledData, idx: &[usize], on: bool, label: &str) -> Result<Option<Standardizer>> {
    if !on {
        return Ok(None);
    }
    let rows: Vec<&[f64]> = idx.iter().map(|&i| data.rows[i]).collect();
    Standardizer::fit(&rows, label).map(Some)
}

fn final_model(
    data: &LabeledData,
    idx: &[usize],
    hp: Hyperparams,
    opts: &FitOptions,
    label: &str,
) -> Result<QualityModel> {
    let std = fit_standardizer(data, idx, opts.standardize, label)?;
    let (x, y) = gather(data, idx, std.as_ref())?;
    Ok(QualityModel {
        version: MODEL_FILE_VERSION,
        model_name: None,
        layer: data.layer.clone(),
        feature_dim: data.dim(),
        standardizer: std,
        hyperparams: hp,
        regressor: train(hp, &x, &y)?,
    })
}

/// Searches the grid on `fit`/`val` and trains the final model.
///
/// A grid with a single candidate skips the search and trains on `fit ∪
/// val`. Otherwise the final model is trained on `fit` only, or on `fit ∪
/// val` when `refit_on_all` is set.
pub fn fit_with_search(
    data: &LabeledData,
    fit: &[usize],
    val: &[usize],
    opts: &FitOptions,
    refit_on_all: bool,
) -> Result<Fitted> {
    let fit_y: Vec<f64> = fit.iter().map(|&i| data.mos[i]).collect();
    let candidates = opts
        .grid
        .candidates(opts.kind, data.dim(), sample_variance(&fit_y));
    let all: Vec<usize> = fit.iter().chain(val).copied().collect();
    if candidates.len() == 1 || val.is_empty() {
        let model = final_model(data, &all, candidates[0], opts, "train+val")?;
        return Ok(Fitted { model, search: None });
    }
    let std = fit_standardizer(data, fit, opts.standardize, "train")?;
    let (fx, fy) = gather(data, fit, std.as_ref())?;
    let (vx, vy) = gather(data, val, std.as_ref())?;
    let search = search_candidates(&fx, &fy, &vx, &vy, &candidates, opts.grid.metric)?;
    let model = if refit_on_all {
        final_model(data, &all, search.best, opts, "train+val")?
    } else {
        // same rows and standardizer as during the search
        let regressor = train(search.best, &fx, &fy)?;
        QualityModel {
            version: MODEL_FILE_VERSION,
            model_name: None,
            layer: data.layer.clone(),
            feature_dim: data.dim(),
            standardizer: std,
            hyperparams: search.best,
            regressor,
        }
    };
    Ok(Fitted {
        model,
        search: Some(search),
    })
}

/// Outcome of one split. Failed splits keep their reason in `status`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitOutcome {
    pub split: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub hyperparams: Option<Hyperparams>,
    pub validation_score: Option<f64>,
    pub plcc: Option<f64>,
    pub srocc: Option<f64>,
    pub status: String,
    /// `(image_id, mos, predicted)` for the test set.
    #[serde(skip)]
    pub predictions: Vec<(String, f64, f64)>,
    #[serde(skip)]
    pub seconds: f64,
}

impl SplitOutcome {
    pub fn metrics(&self) -> Option<(f64, f64)> {
        self.plcc.zip(self.srocc)
    }
}

pub fn evaluate_split(data: &LabeledData, plan: &SplitPlan, index: usize, opts: &FitOptions) -> SplitOutcome {
    let started = Instant::now();
    let mut out = SplitOutcome {
        split: index,
        seed: plan.seed,
        n_train: plan.train.len(),
        n_val: plan.val.len(),
        n_test: plan.test.len(),
        hyperparams: None,
        validation_score: None,
        plcc: None,
        srocc: None,
        status: "ok".into(),
        predictions: Vec::new(),
        seconds: 0.0,
    };
    let result = (|| -> Result<()> {
        let (tr, va, te) = (data.indices(&plan.train), data.indices(&plan.val), data.indices(&plan.test));
        let fitted = fit_with_search(data, &tr, &va, opts, false)?;
        out.hyperparams = Some(fitted.model.hyperparams);
        out.validation_score = fitted.search.map(|s| s.validation_score);
        let mut truth = Vec::with_capacity(te.len());
        let mut pred = Vec::with_capacity(te.len());
        for &i in &te {
            let p = fitted.model.score_values(data.rows[i])?;
            truth.push(data.mos[i]);
            pred.push(p);
            out.predictions.push((data.ids[i].to_string(), data.mos[i], p));
        }
        out.plcc = Some(plcc(&truth, &pred)?);
        out.srocc = Some(srocc(&truth, &pred)?);
        Ok(())
    })();
    if let Err(e) = result {
        log::warn!("split {index} (seed {}) failed: {e}", plan.seed);
        out.plcc = None;
        out.srocc = None;
        out.status = e.to_string();
    }
    out.seconds = started.elapsed().as_secs_f64();
    out
}

pub fn evaluate_series(
    data: &LabeledData,
    plans: &[SplitPlan],
    opts: &FitOptions,
    pool: &rayon::ThreadPool,
) -> Vec<SplitOutcome> {
    pool.install(|| {
        plans
            .par_iter()
            .enumerate()
            .map(|(i, p)| evaluate_split(data, p, i, opts))
            .collect()
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per split; contains no timing so reruns are byte-identical.
pub fn splits_csv(outcomes: &[SplitOutcome], kind: RegressorKind) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Serialization(e.to_string());
    w.write_record([
        "split",
        "seed",
        "n_train",
        "n_val",
        "n_test",
        "regressor",
        "hyperparams",
        "validation_score",
        "plcc",
        "srocc",
        "status",
    ])
    .map_err(err)?;
    for o in outcomes {
        w.write_record([
            o.split.to_string(),
            o.seed.to_string(),
            o.n_train.to_string(),
            o.n_val.to_string(),
            o.n_test.to_string(),
            kind.to_string(),
            o.hyperparams.map(|h| h.to_string()).unwrap_or_default(),
            fmt_opt(o.validation_score),
            fmt_opt(o.plcc),
            fmt_opt(o.srocc),
            o.status.clone(),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
}

fn predictions_csv(rows: &[(String, f64, f64)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Serialization(e.to_string());
    w.write_record(["image_id", "mos", "predicted"]).map_err(err)?;
    for (id, m, p) in rows {
        w.write_record([id.clone(), m.to_string(), p.to_string()]).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize)]
struct Timing {
    splits: usize,
    total_seconds: f64,
    mean_split_seconds: f64,
    per_split_seconds: Vec<f64>,
}

fn timing(outcomes: &[SplitOutcome], total: f64) -> Timing {
    let per: Vec<f64> = outcomes.iter().map(|o| o.seconds).collect();
    Timing {
        splits: per.len(),
        total_seconds: total,
        mean_split_seconds: per.iter().sum::<f64>() / per.len().max(1) as f64,
        per_split_seconds: per,
    }
}

fn prefix(kind: RegressorKind, layer: Option<&str>) -> String {
    match layer {
        Some(l) => format!("{kind}_{}", l.replace(['/', '\\', ' '], "_")),
        None => kind.to_string(),
    }
}

/// Result of `eval`.
#[derive(Debug, Clone)]
pub struct EvalRun {
    pub outcomes: Vec<SplitOutcome>,
    pub table: ReportTable,
    /// Files written, in order: per-split CSV, summary CSV, summary markdown.
    pub files: Vec<PathBuf>,
}

impl EvalRun {
    pub fn row(&self) -> &ReportRow {
        &self.table.rows[0]
    }
}

fn load_inputs(cfg: &ExperimentConfig) -> Result<(DatasetManifest, FeatureTable)> {
    let manifest = cfg.load_manifest()?;
    let table = load_cache(cfg.existing(&cfg.cache, "cache")?)?;
    Ok((manifest, table))
}

pub fn cmd_eval(cfg: &ExperimentConfig) -> Result<EvalRun> {
    let (manifest, table) = load_inputs(cfg)?;
    let data = LabeledData::new(&table, &manifest, cfg.layer.as_deref())?;
    let plans = make_split_series(&manifest, cfg.seed, cfg.splits, cfg.fractions)?;
    let pool = cfg.thread_pool()?;
    let opts = FitOptions {
        kind: cfg.regressor,
        grid: &cfg.grid,
        standardize: cfg.standardize,
    };
    log::info!(
        "evaluating {} over {} splits ({} images, {} dims)",
        cfg.regressor,
        plans.len(),
        data.ids.len(),
        data.dim()
    );
    let started = Instant::now();
    let outcomes = evaluate_series(&data, &plans, &opts, &pool);
    let total = started.elapsed().as_secs_f64();

    let label = cfg.layer.clone().unwrap_or_else(|| ALL_CONCATENATED.to_string());
    let metrics: Vec<Option<(f64, f64)>> = outcomes.iter().map(SplitOutcome::metrics).collect();
    let table = ReportTable::single(ReportRow::from_splits(label, data.dim(), &metrics)?);

    let p = prefix(cfg.regressor, cfg.layer.as_deref());
    create_dir(&cfg.out)?;
    let pred_dir = cfg.out.join(format!("{p}_predictions"));
    create_dir(&pred_dir)?;
    let files = vec![
        cfg.out.join(format!("{p}_splits.csv")),
        cfg.out.join(format!("{p}_summary.csv")),
        cfg.out.join(format!("{p}_summary.md")),
    ];
    write(&files[0], splits_csv(&outcomes, cfg.regressor)?)?;
    table.write(&files[1], &files[2])?;
    for o in &outcomes {
        write(&pred_dir.join(format!("split_{:03}.csv", o.split)), predictions_csv(&o.predictions)?)?;
    }
    let t = serde_json::to_string_pretty(&timing(&outcomes, total)).map_err(|e| Error::Serialization(e.to_string()))?;
    write(&cfg.out.join(format!("{p}_timing.json")), t)?;
    let failed = outcomes.iter().filter(|o| o.metrics().is_none()).count();
    log::info!(
        "{} splits in {total:.2}s ({:.3}s regression per split), {failed} failed",
        outcomes.len(),
        total / outcomes.len() as f64
    );
    Ok(EvalRun { outcomes, table, files })
}

/// Result of `ablate`.
#[derive(Debug, Clone)]
pub struct AblationRun {
    pub table: ReportTable,
    /// Per row of `table`, the outcomes on the shared split series.
    pub outcomes: Vec<Vec<SplitOutcome>>,
    pub files: Vec<PathBuf>,
}

impl AblationRun {
    /// Single layer with the highest PLCC on split `i`; undefined results
    /// rank last.
    pub fn best_layer(&self, i: usize) -> Option<&str> {
        let mut best: Option<(&str, f64)> = None;
        for (row, outs) in self.table.rows.iter().zip(&self.outcomes) {
            if row.label == ALL_CONCATENATED {
                continue;
            }
            let v = outs[i].plcc.unwrap_or(f64::NEG_INFINITY);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((&row.label, v));
            }
        }
        best.map(|b| b.0)
    }
}

pub fn cmd_ablate(cfg: &ExperimentConfig) -> Result<AblationRun> {
    let (manifest, table) = load_inputs(cfg)?;
    let plans = make_split_series(&manifest, cfg.seed, cfg.splits, cfg.fractions)?;
    let pool = cfg.thread_pool()?;
    let opts = FitOptions {
        kind: cfg.regressor,
        grid: &cfg.grid,
        standardize: cfg.standardize,
    };
    let mut labels: Vec<(String, Option<String>)> = table
        .layout()
        .iter()
        .map(|s| (s.layer_name.clone(), Some(s.layer_name.clone())))
        .collect();
    labels.push((ALL_CONCATENATED.to_string(), None));

    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    for (label, layer) in &labels {
        let data = LabeledData::new(&table, &manifest, layer.as_deref())?;
        log::info!("ablation row `{label}` ({} dims)", data.dim());
        let outs = evaluate_series(&data, &plans, &opts, &pool);
        let metrics: Vec<Option<(f64, f64)>> = outs.iter().map(SplitOutcome::metrics).collect();
        rows.push(ReportRow::from_splits(label.clone(), data.dim(), &metrics)?);
        outcomes.push(outs);
    }
    let report = ReportTable::new(rows)?;

    let mut per_split = String::from("layer,split,seed,plcc,srocc,status\n");
    for (row, outs) in report.rows.iter().zip(&outcomes) {
        for o in outs {
            let _ = writeln!(
                per_split,
                "{},{},{},{},{},{}",
                csv_field(&row.label),
                o.split,
                o.seed,
                fmt_opt(o.plcc),
                fmt_opt(o.srocc),
                csv_field(&o.status)
            );
        }
    }
    create_dir(&cfg.out)?;
    let files = vec![
        cfg.out.join(format!("{}_ablation.csv", cfg.regressor)),
        cfg.out.join(format!("{}_ablation.md", cfg.regressor)),
        cfg.out.join(format!("{}_ablation_splits.csv", cfg.regressor)),
    ];
    report.write(&files[0], &files[1])?;
    write(&files[2], per_split)?;
    Ok(AblationRun {
        table: report,
        outcomes,
        files,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Result of `cross`.
#[derive(Debug, Clone)]
pub struct CrossRun {
    pub plcc: Option<f64>,
    pub srocc: Option<f64>,
    pub status: String,
    pub hyperparams: Hyperparams,
    pub model: QualityModel,
    pub files: Vec<PathBuf>,
}

pub fn cmd_cross(cfg: &ExperimentConfig) -> Result<CrossRun> {
    let train_m = cfg.load_manifest()?;
    let test_m = cfg.load_test_manifest()?;
    let train_t = load_cache(cfg.existing(&cfg.cache, "cache")?)?;
    let test_path = cfg.existing(&cfg.test_cache, "test-cache")?;
    let test_t = if Some(&test_path) == cfg.cache.as_ref() {
        None
    } else {
        Some(load_cache(&test_path)?)
    };
    let plan = cross_pair(&train_m, &test_m, cfg.seed)?;
    let train_d = LabeledData::new(&train_t, &train_m, cfg.layer.as_deref())?;
    let test_d = LabeledData::new(test_t.as_ref().unwrap_or(&train_t), &test_m, cfg.layer.as_deref())?;
    if train_d.dim() != test_d.dim() {
        return Err(Error::Shape(format!(
            "training features have {} dims, test features {}",
            train_d.dim(),
            test_d.dim()
        )));
    }
    let opts = FitOptions {
        kind: cfg.regressor,
        grid: &cfg.grid,
        standardize: cfg.standardize,
    };
    let pool = cfg.thread_pool()?;
    let fitted = pool.install(|| {
        fit_with_search(&train_d, &train_d.indices(&plan.fit), &train_d.indices(&plan.val), &opts, true)
    })?;
    let mut model = fitted.model;
    model.model_name = Some(train_m.name.clone());

    let mut truth = Vec::with_capacity(test_d.ids.len());
    let mut pred = Vec::with_capacity(test_d.ids.len());
    let mut rows = Vec::with_capacity(test_d.ids.len());
    for (i, id) in test_d.ids.iter().enumerate() {
        let p = model.score_values(test_d.rows[i])?;
        truth.push(test_d.mos[i]);
        pred.push(p);
        rows.push((id.to_string(), test_d.mos[i], p));
    }
    let (pl, sr, status) = match (plcc(&truth, &pred), srocc(&truth, &pred)) {
        (Ok(a), Ok(b)) => (Some(a), Some(b), "ok".to_string()),
        (Err(e), _) | (_, Err(e)) => (None, None, e.to_string()),
    };

    create_dir(&cfg.out)?;
    let k = cfg.regressor;
    let mut files = vec![
        cfg.out.join(format!("{k}_cross.csv")),
        cfg.out.join(format!("{k}_cross_predictions.csv")),
    ];
    let summary = format!(
        "train,test,n_train,n_test,hyperparams,plcc,srocc,status\n{},{},{},{},{},{},{},{}\n",
        csv_field(&plan.train_name),
        csv_field(&plan.test_name),
        plan.fit.len() + plan.val.len(),
        plan.test.len(),
        csv_field(&model.hyperparams.to_string()),
        fmt_opt(pl),
        fmt_opt(sr),
        csv_field(&status)
    );
    write(&files[0], summary)?;
    write(&files[1], predictions_csv(&rows)?)?;
    if let Some(p) = &cfg.model_out {
        model.save(p)?;
        files.push(p.clone());
    }
    Ok(CrossRun {
        plcc: pl,
        srocc: sr,
        status,
        hyperparams: model.hyperparams,
        model,
        files,
    })
}

/// Fits a deployable model on a whole database: hyperparameters are chosen
/// on a seeded 80/20 carve, then the model is refit on everything.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<(QualityModel, PathBuf)> {
    let (manifest, table) = load_inputs(cfg)?;
    let data = LabeledData::new(&table, &manifest, cfg.layer.as_deref())?;
    let carve = make_split(
        &manifest,
        cfg.seed,
        [1.0 - crate::datasets::CROSS_VALIDATION_FRACTION, crate::datasets::CROSS_VALIDATION_FRACTION, 0.0],
    )?;
    let opts = FitOptions {
        kind: cfg.regressor,
        grid: &cfg.grid,
        standardize: cfg.standardize,
    };
    let pool = cfg.thread_pool()?;
    let fitted =
        pool.install(|| fit_with_search(&data, &data.indices(&carve.train), &data.indices(&carve.val), &opts, true))?;
    let mut model = fitted.model;
    model.model_name = Some(manifest.name.clone());
    if let Some(s) = &fitted.search {
        log::info!(
            "selected {} (validation {:?} {:.4})",
            s.best,
            cfg.grid.metric,
            s.validation_score
        );
    }
    let path = cfg
        .model_out
        .clone()
        .unwrap_or_else(|| cfg.out.join(format!("model_{}.json", cfg.regressor)));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    model.save(&path)?;
    Ok((model, path))
}

/// Writes `count` split plans as `split_NNN.csv` under `<out>/splits`.
pub fn cmd_split(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let manifest = cfg.load_manifest()?;
    let plans = make_split_series(&manifest, cfg.seed, cfg.splits, cfg.fractions)?;
    let dir = cfg.out.join("splits");
    create_dir(&dir)?;
    plans
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let path = dir.join(format!("split_{i:03}.csv"));
            let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            p.write_csv(std::io::BufWriter::new(f))?;
            Ok(path)
        })
        .collect()
}
