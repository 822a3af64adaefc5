//! Procedural fixtures: instance pools, annotated datasets and the images
//! behind them, with known ground truth and no ML models involved.
//!
//! Candidate masks for each generated record consist of the exact
//! ground-truth mask plus perturbed decoys (dilated, eroded, shifted).
//! Pseudo CLIP scores are a pure hash of `(record id, segmenter name)`
//! scaled into a configurable range (mimicking realistic score spreads,
//! but purely synthetic); the ground truth always receives the highest
//! score, so argmax selection must recover it.

use std::path::Path;

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coco::{
    rasterize_polygons, Annotation, Category, Dataset, FrequencyBand, ImageInfo, Provenance,
};
use crate::error::{Error, Result};
use crate::mask::{Bitmap, RleMask};
use crate::pool::{CandidateMask, InstanceRecord, PoolManifest, Source, SEGMENTER_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeFamily {
    Ellipse,
    Rectangle,
    Polygon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourcePolicy {
    Generated,
    Retrieved,
    /// Alternate generated/retrieved per record.
    Alternate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub canvas_width: u32,
    pub canvas_height: u32,
    pub shapes: ShapeFamily,
    /// First entry is the background color; shapes cycle over the rest.
    pub palette: Vec<[u8; 3]>,
    pub categories: u32,
    pub per_category: u32,
    /// Target relative scales, cycled per record.
    pub scales: Vec<f64>,
    /// Pseudo-score range for the hash score model.
    pub score_range: (f64, f64),
    pub sources: SourcePolicy,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            canvas_width: 64,
            canvas_height: 64,
            shapes: ShapeFamily::Rectangle,
            palette: vec![
                [230, 230, 230],
                [200, 40, 40],
                [40, 160, 40],
                [40, 60, 200],
                [220, 180, 30],
            ],
            categories: 3,
            per_category: 10,
            scales: vec![0.25, 0.3, 0.4],
            score_range: (0.15, 0.35),
            sources: SourcePolicy::Alternate,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: String| Error::Config {
            path: path.into(),
            message,
        };
        if self.categories < 1 || self.per_category < 1 {
            return Err(bad(
                "synth.categories/per_category",
                "counts must be at least 1".into(),
            ));
        }
        if self.canvas_width < 16 || self.canvas_height < 16 {
            return Err(bad("synth.canvas", "canvas must be at least 16x16".into()));
        }
        if self.palette.len() < 2 {
            return Err(bad(
                "synth.palette",
                "need a background color and at least one shape color".into(),
            ));
        }
        if self.scales.is_empty() {
            return Err(bad("synth.scales", "need at least one scale".into()));
        }
        let side = self.canvas_width.min(self.canvas_height) as f64;
        let s_max = (side - 4.0) / ((self.canvas_width as f64 * self.canvas_height as f64).sqrt());
        for &s in &self.scales {
            if !(s > 0.0 && s <= s_max) {
                return Err(bad(
                    "synth.scales",
                    format!("scale {s} outside (0, {s_max:.3}] for this canvas"),
                ));
            }
        }
        if !(self.score_range.0 < self.score_range.1 && self.score_range.1 <= 1.0) {
            return Err(bad("synth.score_range", "need lo < hi <= 1".into()));
        }
        Ok(())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic pseudo CLIP score in `[lo, hi)` for a (record, segmenter)
/// pair. This is a hash, not a model output.
pub fn pseudo_score(record_id: &str, segmenter: &str, range: (f64, f64)) -> f64 {
    let h = fnv1a(format!("{record_id}/{segmenter}").as_bytes());
    let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
    range.0 + unit * (range.1 - range.0)
}

// ---------------------------------------------------------------------------
// Shape rasterization
// ---------------------------------------------------------------------------

struct Shape {
    mask: Bitmap,
}

/// Places one shape of (approximately) `target_area` pixels fully inside
/// the canvas, with a one-pixel margin so decoy perturbations stay valid.
fn draw_shape(
    rng: &mut ChaCha8Rng,
    family: ShapeFamily,
    w: u32,
    h: u32,
    target_area: u64,
) -> Shape {
    match family {
        ShapeFamily::Rectangle => {
            let (rect_h, rect_w) = rectangle_sides(target_area, w, h);
            let x0 = rng.random_range(1..=(w - rect_w - 1));
            let y0 = rng.random_range(1..=(h - rect_h - 1));
            let mut mask = Bitmap::new(w, h);
            for y in y0..y0 + rect_h {
                for x in x0..x0 + rect_w {
                    mask.set(x, y, true);
                }
            }
            Shape { mask }
        }
        ShapeFamily::Ellipse => {
            let r = (target_area as f64 / std::f64::consts::PI).sqrt();
            let stretch = rng.random_range(0.8..1.25);
            let max_rx = (w as f64 - 4.0) / 2.0;
            let max_ry = (h as f64 - 4.0) / 2.0;
            let rx = (r * stretch).clamp(1.0, max_rx);
            let ry = (target_area as f64 / (std::f64::consts::PI * rx)).clamp(1.0, max_ry);
            let cx = rng.random_range((rx + 1.0)..(w as f64 - rx - 1.0));
            let cy = rng.random_range((ry + 1.0)..(h as f64 - ry - 1.0));
            let mut mask = Bitmap::new(w, h);
            for y in 0..h {
                for x in 0..w {
                    let dx = (x as f64 + 0.5 - cx) / rx;
                    let dy = (y as f64 + 0.5 - cy) / ry;
                    if dx * dx + dy * dy <= 1.0 {
                        mask.set(x, y, true);
                    }
                }
            }
            Shape { mask }
        }
        ShapeFamily::Polygon => {
            // convex polygon inscribed in a circle sized for the target area
            let k = rng.random_range(5..=9usize);
            // regular k-gon area = k/2 r^2 sin(2pi/k)
            let reg = 0.5 * k as f64 * (2.0 * std::f64::consts::PI / k as f64).sin();
            let r = (target_area as f64 / reg).sqrt();
            let max_r = ((w.min(h) as f64) - 4.0) / 2.0;
            let r = r.clamp(2.0, max_r);
            let cx = rng.random_range((r + 1.0)..(w as f64 - r - 1.0));
            let cy = rng.random_range((r + 1.0)..(h as f64 - r - 1.0));
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let mut poly = Vec::with_capacity(k * 2);
            for i in 0..k {
                let a = phase + std::f64::consts::TAU * i as f64 / k as f64;
                poly.push(cx + r * a.cos());
                poly.push(cy + r * a.sin());
            }
            Shape {
                mask: rasterize_polygons(&[poly], w, h),
            }
        }
    }
}

/// Near-square factorization of `area` that fits the canvas; falls back to
/// rounding when no divisor fits (rectangle areas are then approximate).
fn rectangle_sides(area: u64, w: u32, h: u32) -> (u32, u32) {
    let max_h = (h - 2) as u64;
    let max_w = (w - 2) as u64;
    let start = (area as f64).sqrt().floor() as u64;
    for a in (1..=start.min(max_h)).rev() {
        if area.is_multiple_of(a) && area / a <= max_w {
            return (a as u32, (area / a) as u32);
        }
    }
    let a = start.clamp(1, max_h);
    let b = ((area as f64 / a as f64).round() as u64).clamp(1, max_w);
    (a as u32, b as u32)
}

fn dilate(mask: &Bitmap) -> Bitmap {
    let (w, h) = (mask.width(), mask.height());
    let mut out = mask.clone();
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                if x > 0 {
                    out.set(x - 1, y, true);
                }
                if x + 1 < w {
                    out.set(x + 1, y, true);
                }
                if y > 0 {
                    out.set(x, y - 1, true);
                }
                if y + 1 < h {
                    out.set(x, y + 1, true);
                }
            }
        }
    }
    out
}

fn erode(mask: &Bitmap) -> Bitmap {
    let (w, h) = (mask.width(), mask.height());
    let mut out = Bitmap::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let keep = mask.get(x, y)
                && x > 0
                && mask.get(x - 1, y)
                && x + 1 < w
                && mask.get(x + 1, y)
                && y > 0
                && mask.get(x, y - 1)
                && y + 1 < h
                && mask.get(x, y + 1);
            out.set(x, y, keep);
        }
    }
    out
}

fn shift(mask: &Bitmap, dx: i64, dy: i64) -> Bitmap {
    let (w, h) = (mask.width(), mask.height());
    let mut out = Bitmap::new(w, h);
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                let nx = x as i64 + dx;
                let ny = y as i64 + dy;
                if (0..w as i64).contains(&nx) && (0..h as i64).contains(&ny) {
                    out.set(nx as u32, ny as u32, true);
                }
            }
        }
    }
    out
}

fn render_shape_image(spec: &SynthSpec, mask: &Bitmap, color_index: usize) -> RgbImage {
    let bg = spec.palette[0];
    let fg = spec.palette[1 + color_index % (spec.palette.len() - 1)];
    RgbImage::from_fn(spec.canvas_width, spec.canvas_height, |x, y| {
        image::Rgb(if mask.get(x, y) { fg } else { bg })
    })
}

fn write_png(path: &Path, img: &RgbImage) -> Result<()> {
    img.save(path).map_err(|source| Error::Image {
        path: path.display().to_string(),
        source,
    })
}

fn band_for(index: u32) -> FrequencyBand {
    match index % 3 {
        0 => FrequencyBand::Rare,
        1 => FrequencyBand::Common,
        _ => FrequencyBand::Frequent,
    }
}

pub fn category_table(spec: &SynthSpec) -> Vec<Category> {
    (1..=spec.categories as u64)
        .map(|id| Category {
            id,
            name: format!("shape-{id:03}"),
            frequency_band: band_for((id - 1) as u32),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

const POOL_SALT: u64 = 0x706f_6f6c; // stream separation from dataset generation
const DATASET_SALT: u64 = 0x6461_7461;

fn record_rng(spec: &SynthSpec, salt: u64, category: u64, index: u32) -> ChaCha8Rng {
    let mut state = spec.seed ^ salt;
    for v in [category, index as u64] {
        state = state
            .wrapping_add(v)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .rotate_left(27);
    }
    ChaCha8Rng::seed_from_u64(state)
}

/// Generates an instance pool and writes its images under
/// `out_dir/images/`. Every record's candidates hold the exact ground-truth
/// mask at the argmax pseudo-score plus three lower-scoring decoys.
pub fn generate_pool(spec: &SynthSpec, out_dir: &Path) -> Result<PoolManifest> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir.join("images"))?;
    let (w, h) = (spec.canvas_width, spec.canvas_height);
    let canvas_area = w as u64 * h as u64;

    let mut pool = PoolManifest::default();
    let mut global = 0u32;
    for category in 1..=spec.categories as u64 {
        for j in 0..spec.per_category {
            let id = format!("synth-{category:03}-{j:05}");
            let mut rng = record_rng(spec, POOL_SALT, category, j);
            let scale = spec.scales[global as usize % spec.scales.len()];
            let target_area = ((scale * scale * canvas_area as f64).round() as u64).max(1);
            let shape = draw_shape(&mut rng, spec.shapes, w, h, target_area);

            let scores: Vec<f64> = SEGMENTER_NAMES
                .iter()
                .map(|name| pseudo_score(&id, name, spec.score_range))
                .collect();
            let best = scores
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();

            let decoys = [
                dilate(&shape.mask),
                erode(&shape.mask),
                shift(&shape.mask, 2, 1),
            ];
            let mut decoy_iter = decoys.into_iter();
            let candidates: Vec<CandidateMask> = SEGMENTER_NAMES
                .iter()
                .enumerate()
                .map(|(i, name)| {
                    let mask = if i == best {
                        shape.mask.clone()
                    } else {
                        decoy_iter.next().expect("three decoys")
                    };
                    CandidateMask {
                        segmenter: (*name).into(),
                        clip_score: scores[i],
                        mask: RleMask::encode(&mask),
                    }
                })
                .collect();

            let source = match spec.sources {
                SourcePolicy::Generated => Source::Generated,
                SourcePolicy::Retrieved => Source::Retrieved,
                SourcePolicy::Alternate => {
                    if global.is_multiple_of(2) {
                        Source::Generated
                    } else {
                        Source::Retrieved
                    }
                }
            };

            let image = render_shape_image(spec, &shape.mask, (category - 1) as usize);
            let image_path = format!("images/{id}.png");
            write_png(&out_dir.join(&image_path), &image)?;

            pool.records.push(InstanceRecord {
                id,
                category_id: category,
                source,
                image_path,
                width: w,
                height: h,
                candidates,
                chosen: None,
                clip_score: None,
            });
            global += 1;
        }
    }
    Ok(pool)
}

/// Generates an annotated dataset (one shape per image) and writes its
/// images under `out_dir/images/`.
pub fn generate_annotated_dataset(spec: &SynthSpec, out_dir: &Path) -> Result<Dataset> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir.join("images"))?;
    let (w, h) = (spec.canvas_width, spec.canvas_height);
    let canvas_area = w as u64 * h as u64;

    let mut dataset = Dataset {
        images: Vec::new(),
        annotations: Vec::new(),
        categories: category_table(spec),
    };
    let mut next_id = 1u64;
    let mut global = 0u32;
    for category in 1..=spec.categories as u64 {
        for j in 0..spec.per_category {
            let mut rng = record_rng(spec, DATASET_SALT, category, j);
            let scale = spec.scales[global as usize % spec.scales.len()];
            let target_area = ((scale * scale * canvas_area as f64).round() as u64).max(1);
            let shape = draw_shape(&mut rng, spec.shapes, w, h, target_area);

            let file_name = format!("images/bg-{next_id:06}.png");
            let image = render_shape_image(spec, &shape.mask, (category - 1) as usize);
            write_png(&out_dir.join(&file_name), &image)?;

            dataset.images.push(ImageInfo {
                id: next_id,
                width: w,
                height: h,
                file_name,
            });
            dataset.annotations.push(Annotation::from_mask(
                next_id,
                next_id,
                category,
                RleMask::encode(&shape.mask),
                Provenance::Original,
            ));
            next_id += 1;
            global += 1;
        }
    }
    Ok(dataset)
}
