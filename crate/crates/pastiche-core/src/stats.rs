//! Per-category object-scale statistics.
//!
//! The scale of an annotation is `sqrt(area / (image_width * image_height))`.
//! For each category we keep the sample mean and the population standard
//! deviation of that scale, plus a global fallback over all annotations for
//! categories never seen in the source dataset.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::coco::Dataset;
use crate::error::{Error, Result};

pub const DEFAULT_SCALE_CLAMP: (f64, f64) = (0.02, 0.95);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryScale {
    pub mu: f64,
    pub sigma: f64,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleStats {
    pub per_category: BTreeMap<u64, CategoryScale>,
    pub global: CategoryScale,
}

impl ScaleStats {
    /// Draws a paste scale for `category_id`, falling back to the global
    /// statistics for unseen categories, clamped to `[clamp.0, clamp.1]`.
    ///
    /// A zero standard deviation returns the mean directly without
    /// consuming randomness.
    pub fn sample(&self, category_id: u64, clamp: (f64, f64), rng: &mut impl Rng) -> f64 {
        let cs = self.per_category.get(&category_id).unwrap_or(&self.global);
        let raw = if cs.sigma > 0.0 {
            Normal::new(cs.mu, cs.sigma)
                .expect("finite mu/sigma")
                .sample(rng)
        } else {
            cs.mu
        };
        raw.clamp(clamp.0, clamp.1)
    }

    pub fn sample_default(&self, category_id: u64, rng: &mut impl Rng) -> f64 {
        self.sample(category_id, DEFAULT_SCALE_CLAMP, rng)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let sidecar = Sidecar {
            categories: self
                .per_category
                .iter()
                .map(|(&id, cs)| (id.to_string(), *cs))
                .collect(),
            global: self.global,
        };
        std::fs::write(
            path,
            serde_json::to_vec_pretty(&sidecar).expect("serializable"),
        )?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let sidecar: Sidecar = serde_json::from_slice(&bytes).map_err(|e| Error::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut per_category = BTreeMap::new();
        for (key, cs) in sidecar.categories {
            let id: u64 = key.parse().map_err(|_| Error::Config {
                path: path.display().to_string(),
                message: format!("category key `{key}` is not an integer"),
            })?;
            per_category.insert(id, cs);
        }
        Ok(ScaleStats {
            per_category,
            global: sidecar.global,
        })
    }
}

/// JSON sidecar layout: `{"categories": {"<id>": {mu, sigma, n}}, "global": ...}`.
#[derive(Serialize, Deserialize)]
struct Sidecar {
    categories: BTreeMap<String, CategoryScale>,
    global: CategoryScale,
}

fn summarize(scales: &[f64]) -> CategoryScale {
    let n = scales.len() as f64;
    let mu = scales.iter().sum::<f64>() / n;
    let var = scales.iter().map(|s| (s - mu) * (s - mu)).sum::<f64>() / n;
    CategoryScale {
        mu,
        sigma: var.sqrt(),
        n: scales.len() as u64,
    }
}

/// Computes per-category and global scale statistics from an annotated
/// dataset. Errors if the dataset has no annotations.
pub fn compute_scale_stats(d: &Dataset) -> Result<ScaleStats> {
    if d.annotations.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dims: BTreeMap<u64, (u32, u32)> = d
        .images
        .iter()
        .map(|im| (im.id, (im.width, im.height)))
        .collect();

    let mut by_category: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    let mut all: Vec<f64> = Vec::with_capacity(d.annotations.len());
    for ann in &d.annotations {
        let &(w, h) = dims.get(&ann.image_id).ok_or_else(|| {
            Error::Integrity(format!(
                "annotation {} references missing image {}",
                ann.id, ann.image_id
            ))
        })?;
        let scale = (ann.area as f64 / (w as f64 * h as f64)).sqrt();
        by_category.entry(ann.category_id).or_default().push(scale);
        all.push(scale);
    }

    Ok(ScaleStats {
        per_category: by_category
            .into_iter()
            .map(|(id, scales)| (id, summarize(&scales)))
            .collect(),
        global: summarize(&all),
    })
}
