use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use crate::datasets::ImageRecord;
use crate::error::{Error, Result};
use crate::features::{concatenate, layout_for_spec, load_cache, save_cache, FeatureTable, FeatureVector};
use crate::graph_runtime::{load_model, open_image, preprocess, ModelHandle, ModelSpec};

/// Outcome of `extract`.
#[derive(Debug, Clone)]
pub struct ExtractSummary {
    pub cache: PathBuf,
    /// Rows in the cache after the run.
    pub rows: usize,
    pub dim: usize,
    /// Images run through the network in this invocation.
    pub extracted: usize,
    /// Images already present in the cache.
    pub skipped: usize,
    /// `(image_id, reason)` for every image that failed.
    pub failed: Vec<(String, String)>,
    pub seconds: f64,
}

impl ExtractSummary {
    pub fn images_per_second(&self) -> f64 {
        if self.seconds > 0.0 {
            self.extracted as f64 / self.seconds
        } else {
            0.0
        }
    }
}

/// Descriptor of one image file.
pub fn describe_image(handle: &ModelHandle, image_id: &str, path: &Path) -> Result<FeatureVector> {
    let img = open_image(path)?;
    let input = preprocess(&img, handle.spec())?;
    let maps = handle.forward_taps(&input)?;
    concatenate(image_id, &maps, handle.spec())
}

/// Runs every manifest image not yet in the cache through the network.
///
/// The cache is rewritten after every `checkpoint_every` images, so an
/// interrupted run resumes where it stopped. Rows end up in manifest order.
pub fn cmd_extract(cfg: &ExperimentConfig) -> Result<ExtractSummary> {
    let spec = ModelSpec::from_file(cfg.existing(&cfg.model_spec, "model-spec")?)?;
    let manifest = cfg.load_manifest()?;
    let cache = cfg.required(&cfg.cache, "cache")?;
    let layout = layout_for_spec(&spec);

    let mut table = if cache.exists() {
        let t = load_cache(&cache)?;
        if t.layout() != layout.as_slice() {
            return Err(Error::Shape(format!(
                "existing cache {} has a different layer layout than {}",
                cache.display(),
                spec.model_name
            )));
        }
        t
    } else {
        FeatureTable::new(Some(spec.model_name.clone()), layout.clone())?
    };

    let mut todo: Vec<&ImageRecord> = manifest
        .records
        .iter()
        .filter(|r| !table.contains(&r.image_id))
        .collect();
    let skipped = manifest.len() - todo.len();
    if let Some(limit) = cfg.limit {
        todo.truncate(limit);
    }
    log::info!(
        "{} images to extract, {skipped} already cached, {} workers",
        todo.len(),
        cfg.workers
    );

    let started = Instant::now();
    let mut failed = Vec::new();
    let mut extracted = 0;
    if !todo.is_empty() {
        let handle = load_model(&spec)?;
        let pool = cfg.thread_pool()?;
        for chunk in todo.chunks(cfg.checkpoint_every) {
            let results: Vec<Result<FeatureVector>> = pool.install(|| {
                chunk
                    .par_iter()
                    .map(|r| describe_image(&handle, &r.image_id, &r.path))
                    .collect()
            });
            for (r, res) in chunk.iter().zip(results) {
                match res {
                    Ok(v) => {
                        table.push(v)?;
                        extracted += 1;
                    }
                    Err(e) => {
                        log::error!("{}: {e}", r.image_id);
                        failed.push((r.image_id.clone(), e.to_string()));
                    }
                }
            }
            table.reorder(manifest.ids());
            save_cache(&table, &cache)?;
            log::info!(
                "checkpoint: {} rows cached, {:.2} images/s",
                table.len(),
                extracted as f64 / started.elapsed().as_secs_f64().max(1e-9)
            );
        }
    } else if !cache.exists() {
        save_cache(&table, &cache)?;
    }
    let summary = ExtractSummary {
        cache,
        rows: table.len(),
        dim: table.dim(),
        extracted,
        skipped,
        failed,
        seconds: started.elapsed().as_secs_f64(),
    };
    log::info!(
        "extracted {} images ({} dims) in {:.2}s, {:.2} images/s, {:.3}s per image; {} failed",
        summary.extracted,
        summary.dim,
        summary.seconds,
        summary.images_per_second(),
        if summary.extracted > 0 { summary.seconds / summary.extracted as f64 } else { 0.0 },
        summary.failed.len()
    );
    Ok(summary)
}
