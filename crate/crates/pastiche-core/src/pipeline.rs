//! Config-driven orchestration of the compose stage, shared by the CLI
//! and the C API.

use std::path::{Path, PathBuf};

use crate::coco::{parse_dataset, Dataset};
use crate::compose::{compose_dataset, ComposeInputs, PoolInstanceProvider};
use crate::config::PipelineConfig;
use crate::error::Result;
use crate::pool::{load_manifest, FsImageLoader};
use crate::stats::{compute_scale_stats, ScaleStats};

/// Runs composition end to end from a [`PipelineConfig`]: loads the source
/// dataset and pool manifest, takes scale statistics from the sidecar (or
/// computes them from the dataset), and writes images, plan traces and the
/// composed dataset under `output_dir`.
pub fn run_compose(cfg: &PipelineConfig) -> Result<Dataset> {
    let manifest_path = cfg.require("pool_manifest")?.to_path_buf();
    let dataset_path = cfg.require("source_dataset")?.to_path_buf();
    let out_dir = cfg.require("output_dir")?.to_path_buf();

    let dataset = parse_dataset(&std::fs::read(&dataset_path)?)?;
    let pool = load_manifest(&manifest_path, Some(&dataset.categories))?;
    let stats = match &cfg.stats_path {
        Some(path) => ScaleStats::load(path)?,
        None => compute_scale_stats(&dataset)?,
    };

    let pool_root = resolve_root(&cfg.pool_image_root, &manifest_path);
    let bg_root = resolve_root(&cfg.background_image_root, &dataset_path);
    let pool_loader = FsImageLoader::new(pool_root);
    let bg_loader = FsImageLoader::new(bg_root);
    let provider = PoolInstanceProvider::new(&pool, &pool_loader);
    let inputs = ComposeInputs {
        pool: &pool,
        stats: &stats,
        dataset: &dataset,
        backgrounds: &bg_loader,
        instances: &provider,
    };
    compose_dataset(&inputs, &cfg.compose, &out_dir, cfg.jobs)
}

fn resolve_root(configured: &Option<PathBuf>, anchor: &Path) -> PathBuf {
    configured
        .clone()
        .or_else(|| anchor.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."))
}
