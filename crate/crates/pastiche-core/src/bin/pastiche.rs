//! Pipeline CLI. Subcommands are pure functions of (inputs, config, seed):
//! rerunning any stage produces byte-identical outputs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use pastiche_core::coco::{parse_dataset, serialize_dataset, validate_json, Dataset};
use pastiche_core::config::{load_config, PipelineConfig};
use pastiche_core::pipeline::run_compose;
use pastiche_core::pool::{
    filter_pool, load_manifest, retention_curve, save_manifest, select_all, FsImageLoader,
};
use pastiche_core::stats::compute_scale_stats;
use pastiche_core::synth::{generate_annotated_dataset, generate_pool, SynthSpec};

#[derive(Parser)]
#[command(
    name = "pastiche",
    version,
    about = "Compose instance-segmentation training data by scalable copy-paste"
)]
struct Cli {
    /// JSON config file; every key can also come from PASTICHE_* env vars.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides compose.seed (and synth spec seeds).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker count override; 0 = default.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pick the best-scoring candidate mask for every pool record.
    Select {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
    },
    /// Filter the pool by area, score threshold and background simplicity.
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        /// Where to write the JSON filter report.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Dataset providing the category table (defaults to config.source_dataset).
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Root for record image paths (defaults to config.pool_image_root,
        /// then the manifest's directory).
        #[arg(long)]
        image_root: Option<PathBuf>,
    },
    /// Learn per-category scale statistics from an annotated dataset.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
    },
    /// Sweep score thresholds and emit per-band retention rates as CSV.
    Retention {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        thresholds: Vec<f64>,
        #[arg(long = "out")]
        output: PathBuf,
        /// Dataset providing frequency bands (defaults to config.source_dataset).
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Compose training images from the filtered pool onto backgrounds.
    Compose {
        /// Output directory (defaults to config.output_dir).
        #[arg(long = "out")]
        output: Option<PathBuf>,
    },
    /// Check every dataset invariant; exit 0 only when clean.
    Validate {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Generate a synthetic pool + annotated dataset with known ground truth.
    Synth {
        /// Synthesis spec JSON; omit for the default spec.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long = "out")]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            let kind = err
                .downcast_ref::<pastiche_core::Error>()
                .map(error_kind)
                .unwrap_or("other");
            eprintln!(
                "{}",
                serde_json::json!({"error": format!("{err:#}"), "kind": kind})
            );
            ExitCode::FAILURE
        }
    }
}

fn error_kind(err: &pastiche_core::Error) -> &'static str {
    use pastiche_core::Error::*;
    match err {
        JsonParse { .. } => "json_parse",
        MaskFormat(_) => "mask_format",
        Integrity(_) => "integrity",
        Manifest(_) => "manifest",
        Validation(_) => "validation",
        EmptyPool => "empty_pool",
        EmptyDataset => "empty_dataset",
        Config { .. } => "config",
        Image { .. } => "image",
        Io(_) => "io",
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.compose.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    init_logging(&cfg);

    match cli.command {
        Command::Select { input, output } => {
            let mut pool = load_manifest(&input, None)?;
            select_all(&mut pool);
            save_manifest(&pool, &output)?;
            log::info!(
                "selected masks for {} records -> {}",
                pool.records.len(),
                output.display()
            );
        }
        Command::Filter {
            input,
            output,
            report,
            dataset,
            image_root,
        } => {
            let categories = match dataset.or_else(|| cfg.source_dataset.clone()) {
                Some(path) => Some(read_dataset(&path)?.categories),
                None => None,
            };
            let pool = load_manifest(&input, categories.as_deref())?;
            let root = image_root
                .or_else(|| cfg.pool_image_root.clone())
                .or_else(|| input.parent().map(Path::to_path_buf))
                .unwrap_or_else(|| PathBuf::from("."));
            let loader = FsImageLoader::new(root);
            let worker_pool = rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.jobs)
                .build()
                .context("building worker pool")?;
            let (kept, filter_report) =
                worker_pool.install(|| filter_pool(&pool, &cfg.filter, &loader));
            save_manifest(&kept, &output)?;
            if let Some(report_path) = report {
                std::fs::write(
                    &report_path,
                    serde_json::to_vec_pretty(&filter_report).expect("serializable report"),
                )?;
            }
            log::info!(
                "kept {}/{} records -> {}",
                filter_report.kept,
                filter_report.input,
                output.display()
            );
        }
        Command::Stats { input, output } => {
            let dataset = read_dataset(&input)?;
            let stats = compute_scale_stats(&dataset)?;
            stats.save(&output)?;
            log::info!(
                "scale stats for {} categories -> {}",
                stats.per_category.len(),
                output.display()
            );
        }
        Command::Retention {
            input,
            thresholds,
            output,
            dataset,
        } => {
            let dataset_path = dataset
                .or_else(|| cfg.source_dataset.clone())
                .context("retention needs --dataset or source_dataset for frequency bands")?;
            let bands = read_dataset(&dataset_path)?.band_table();
            let mut pool = load_manifest(&input, None)?;
            if pool.records.iter().any(|r| r.chosen.is_none()) {
                select_all(&mut pool);
            }
            let table = retention_curve(&pool, &thresholds, cfg.filter.subtractive, &bands);
            std::fs::write(&output, table.to_csv())?;
            log::info!(
                "{} retention rows -> {}",
                table.rows.len(),
                output.display()
            );
        }
        Command::Compose { output } => {
            if let Some(out_dir) = output {
                cfg.output_dir = Some(out_dir);
            }
            let composed = run_compose(&cfg)?;
            log::info!(
                "composed {} images / {} annotations -> {}",
                composed.images.len(),
                composed.annotations.len(),
                cfg.output_dir
                    .as_deref()
                    .unwrap_or(Path::new("."))
                    .display()
            );
        }
        Command::Validate { input } => {
            let bytes = std::fs::read(&input)
                .with_context(|| format!("reading dataset {}", input.display()))?;
            let (summary, violations) = validate_json(&bytes)?;
            println!(
                "{}",
                serde_json::json!({
                    "valid": violations.is_empty(),
                    "images": summary.images,
                    "annotations": summary.annotations,
                    "categories": summary.categories,
                    "violations": violations,
                })
            );
            if !violations.is_empty() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Synth { spec, output } => {
            let mut spec: SynthSpec = match spec {
                Some(path) => {
                    let bytes = std::fs::read(&path)?;
                    serde_json::from_slice(&bytes).map_err(|e| pastiche_core::Error::Config {
                        path: path.display().to_string(),
                        message: e.to_string(),
                    })?
                }
                None => SynthSpec::default(),
            };
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            let pool = generate_pool(&spec, &output)?;
            save_manifest(&pool, &output.join("pool.ndjson"))?;
            let dataset = generate_annotated_dataset(&spec, &output)?;
            std::fs::write(output.join("dataset.json"), serialize_dataset(&dataset))?;
            log::info!(
                "synthesized {} pool records, {} dataset images -> {}",
                pool.records.len(),
                dataset.images.len(),
                output.display()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn read_dataset(path: &Path) -> anyhow::Result<Dataset> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading dataset {}", path.display()))?;
    Ok(parse_dataset(&bytes)?)
}

fn init_logging(cfg: &PipelineConfig) {
    let mut builder = env_logger::Builder::from_env(
        env_logger::Env::default().default_filter_or(cfg.log_level.as_deref().unwrap_or("info")),
    );
    builder.format_timestamp(None).try_init().ok();
}
