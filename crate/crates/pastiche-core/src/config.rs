//! Pipeline configuration shared by the CLI subcommands.
//!
//! Config files are JSON. Any key can be overridden through the
//! environment with the `PASTICHE_` prefix, using `__` between nesting
//! levels: `PASTICHE_JOBS=8`, `PASTICHE_FILTER__CLIP_THRESHOLD=0.25`,
//! `PASTICHE_COMPOSE__N_MAX=10`. Values are parsed as JSON when possible,
//! falling back to plain strings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compose::ComposeConfig;
use crate::error::{Error, Result};
use crate::pool::FilterConfig;

pub const ENV_PREFIX: &str = "PASTICHE_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PipelineConfig {
    /// Pool manifest (newline-delimited JSON records).
    pub pool_manifest: Option<PathBuf>,
    /// Source dataset JSON; backgrounds and the category table come from here.
    pub source_dataset: Option<PathBuf>,
    /// Root for pool record `image_path`s. Defaults to the manifest's directory.
    pub pool_image_root: Option<PathBuf>,
    /// Root for dataset `file_name`s. Defaults to the dataset's directory.
    pub background_image_root: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    /// Scale-statistics sidecar produced by `stats` and consumed by `compose`.
    pub stats_path: Option<PathBuf>,
    /// Worker count; 0 picks the rayon default.
    pub jobs: usize,
    pub log_level: Option<String>,
    pub filter: FilterConfig,
    pub compose: ComposeConfig,
}

impl PipelineConfig {
    pub fn require(&self, field: &str) -> Result<&Path> {
        let value = match field {
            "pool_manifest" => &self.pool_manifest,
            "source_dataset" => &self.source_dataset,
            "output_dir" => &self.output_dir,
            "stats_path" => &self.stats_path,
            _ => &None,
        };
        value.as_deref().ok_or_else(|| Error::Config {
            path: field.into(),
            message:
                "required by this subcommand; set it in the config file, the environment, or a flag"
                    .into(),
        })
    }
}

/// Loads a config file and applies environment overrides. With no file,
/// starts from defaults so env-only invocation works.
pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let mut value = match path {
        Some(path) => {
            let bytes = std::fs::read(path)?;
            serde_json::from_slice(&bytes).map_err(|e| Error::Config {
                path: path.display().to_string(),
                message: e.to_string(),
            })?
        }
        None => serde_json::json!({}),
    };
    apply_env_overrides(&mut value, std::env::vars())?;
    deserialize_config(value)
}

/// Deserializes a config value, reporting the offending key path on error.
pub fn deserialize_config(value: serde_json::Value) -> Result<PipelineConfig> {
    serde_path_to_error::deserialize(value).map_err(|e| Error::Config {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

fn apply_env_overrides(
    value: &mut serde_json::Value,
    vars: impl Iterator<Item = (String, String)>,
) -> Result<()> {
    for (key, raw) in vars {
        let Some(rest) = key.strip_prefix(ENV_PREFIX) else {
            continue;
        };
        if rest.is_empty() {
            continue;
        }
        let segments: Vec<String> = rest.split("__").map(str::to_ascii_lowercase).collect();
        let leaf: serde_json::Value =
            serde_json::from_str(&raw).unwrap_or(serde_json::Value::String(raw));

        let mut cursor = &mut *value;
        for segment in &segments[..segments.len() - 1] {
            cursor = cursor
                .as_object_mut()
                .ok_or_else(|| Error::Config {
                    path: segments.join("."),
                    message: format!("cannot override below non-object key `{segment}`"),
                })?
                .entry(segment.clone())
                .or_insert_with(|| serde_json::json!({}));
        }
        cursor
            .as_object_mut()
            .ok_or_else(|| Error::Config {
                path: segments.join("."),
                message: "cannot override a non-object".into(),
            })?
            .insert(segments.last().unwrap().clone(), leaf);
    }
    Ok(())
}
