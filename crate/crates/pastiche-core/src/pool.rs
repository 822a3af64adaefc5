//! The instance pool: externally acquired object images, their candidate
//! masks and precomputed CLIP scores.
//!
//! Upstream producers (generators, crawlers, segmenters, scorers) hand the
//! pipeline a newline-delimited JSON manifest, one record per line. This
//! module validates the manifest, picks the best candidate mask per record,
//! and filters records by mask-area bounds, category-specific score
//! thresholds and background simplicity.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coco::{Category, FrequencyBand};
use crate::error::{Error, Result};
use crate::mask::RleMask;

pub const SEGMENTER_NAMES: [&str; 4] = ["u2net", "selfreformer", "ufo", "clipseg"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Generated,
    Retrieved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMask {
    pub segmenter: String,
    pub clip_score: f64,
    pub mask: RleMask,
}

/// One acquired object instance. `chosen`/`clip_score` stay unset until
/// [`select_mask_by_clip`] runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    pub category_id: u64,
    pub source: Source,
    pub image_path: String,
    pub width: u32,
    pub height: u32,
    pub candidates: Vec<CandidateMask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_score: Option<f64>,
}

impl InstanceRecord {
    pub fn chosen_mask(&self) -> Option<&RleMask> {
        self.chosen.map(|i| &self.candidates[i].mask)
    }

    /// Chosen-mask area as a fraction of the instance image.
    pub fn area_fraction(&self) -> Option<f64> {
        self.chosen_mask()
            .map(|m| m.area() as f64 / (self.width as f64 * self.height as f64))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PoolManifest {
    pub records: Vec<InstanceRecord>,
}

impl PoolManifest {
    /// Record indices grouped by category, in manifest order.
    pub fn by_category(&self) -> BTreeMap<u64, Vec<usize>> {
        let mut map: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            map.entry(r.category_id).or_default().push(i);
        }
        map
    }

    pub fn record(&self, id: &str) -> Option<&InstanceRecord> {
        self.records.iter().find(|r| r.id == id)
    }
}

/// Filtering knobs. The defaults are the pipeline's baseline operating
/// point: score threshold 0.21 with subtractive slack 0.01, mask area
/// within [5%, 95%] of the image, and a 40%-dominant-color background test
/// (tolerance 5 intensity units) applied to retrieved images only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub clip_threshold: f64,
    pub subtractive: f64,
    pub area_min: f64,
    pub area_max: f64,
    pub background_dominance: f64,
    pub color_tolerance: u8,
    pub require_background_check_for: BTreeSet<Source>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            clip_threshold: 0.21,
            subtractive: 0.01,
            area_min: 0.05,
            area_max: 0.95,
            background_dominance: 0.40,
            color_tolerance: 5,
            require_background_check_for: BTreeSet::from([Source::Retrieved]),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.area_min)
            || !(0.0..=1.0).contains(&self.area_max)
            || self.area_min >= self.area_max
        {
            return Err(Error::Config {
                path: "filter.area_min/area_max".into(),
                message: format!(
                    "need 0 <= area_min < area_max <= 1, got [{}, {}]",
                    self.area_min, self.area_max
                ),
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Manifest I/O
// ---------------------------------------------------------------------------

/// Loads a newline-delimited JSON manifest. When a category table is given,
/// record category ids are checked against it. Error messages carry
/// 1-based line numbers.
pub fn load_manifest(path: &Path, categories: Option<&[Category]>) -> Result<PoolManifest> {
    let text = std::fs::read_to_string(path)?;
    let known: Option<BTreeSet<u64>> = categories.map(|cats| cats.iter().map(|c| c.id).collect());

    let mut records = Vec::new();
    let mut seen_ids: HashMap<String, usize> = HashMap::new();
    let mut problems: Vec<String> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: InstanceRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("line {lineno}: malformed record: {e}"));
                continue;
            }
        };
        if let Err(msg) = validate_record(&record, known.as_ref()) {
            problems.push(format!("line {lineno}: {msg}"));
            continue;
        }
        if let Some(prev) = seen_ids.insert(record.id.clone(), lineno) {
            problems.push(format!(
                "line {lineno}: duplicate id `{}` (first seen on line {prev})",
                record.id
            ));
            continue;
        }
        records.push(record);
    }

    if problems.is_empty() {
        Ok(PoolManifest { records })
    } else {
        Err(Error::Manifest(problems.join("; ")))
    }
}

fn validate_record(
    r: &InstanceRecord,
    known: Option<&BTreeSet<u64>>,
) -> std::result::Result<(), String> {
    if r.id.is_empty() {
        return Err("empty id".into());
    }
    if r.width == 0 || r.height == 0 {
        return Err(format!(
            "non-positive image dimensions {}x{}",
            r.width, r.height
        ));
    }
    if r.candidates.is_empty() {
        return Err(format!("record `{}` has no candidate masks", r.id));
    }
    if r.category_id == 0 {
        return Err(format!("record `{}` has non-positive category id", r.id));
    }
    if let Some(known) = known {
        if !known.contains(&r.category_id) {
            return Err(format!(
                "record `{}` references unknown category {}",
                r.id, r.category_id
            ));
        }
    }
    for cand in &r.candidates {
        if !cand.clip_score.is_finite() || !(-1.0..=1.0).contains(&cand.clip_score) {
            return Err(format!(
                "record `{}` candidate `{}` has invalid clip score {}",
                r.id, cand.segmenter, cand.clip_score
            ));
        }
        if cand.mask.width() != r.width || cand.mask.height() != r.height {
            return Err(format!(
                "record `{}` candidate `{}` mask is {}x{}, image is {}x{}",
                r.id,
                cand.segmenter,
                cand.mask.height(),
                cand.mask.width(),
                r.height,
                r.width
            ));
        }
    }
    if let Some(chosen) = r.chosen {
        if chosen >= r.candidates.len() {
            return Err(format!(
                "record `{}` chosen index {} out of range",
                r.id, chosen
            ));
        }
        if r.clip_score != Some(r.candidates[chosen].clip_score) {
            return Err(format!(
                "record `{}` clip_score does not match its chosen candidate",
                r.id
            ));
        }
    }
    Ok(())
}

pub fn save_manifest(pool: &PoolManifest, path: &Path) -> Result<()> {
    let mut out = String::new();
    for record in &pool.records {
        out.push_str(&serde_json::to_string(record).expect("serializable record"));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Background simplicity
// ---------------------------------------------------------------------------

/// Accepts an image whose dominant color covers at least
/// `cfg.background_dominance` of the pixels.
///
/// The dominant color is the mode of the per-channel-quantized histogram
/// (bin width `color_tolerance + 1`), represented by the mean color of that
/// bin; a pixel counts as close when every channel lies within
/// `color_tolerance` of it (Chebyshev distance). Ties between bins resolve
/// to the lexicographically smallest bin. Purely histogram-based, so the
/// verdict is invariant to pixel permutation.
pub fn background_simplicity(img: &image::RgbImage, cfg: &FilterConfig) -> bool {
    let q = cfg.color_tolerance as u32 + 1;
    let mut bins: BTreeMap<(u8, u8, u8), (u64, [u64; 3])> = BTreeMap::new();
    for px in img.pixels() {
        let key = (
            (px.0[0] as u32 / q) as u8,
            (px.0[1] as u32 / q) as u8,
            (px.0[2] as u32 / q) as u8,
        );
        let entry = bins.entry(key).or_insert((0, [0, 0, 0]));
        entry.0 += 1;
        for c in 0..3 {
            entry.1[c] += px.0[c] as u64;
        }
    }
    let Some((count, sums)) = bins
        .values()
        .fold(None, |best: Option<(u64, [u64; 3])>, &(c, s)| match best {
            Some((bc, _)) if bc >= c => best,
            _ => Some((c, s)),
        })
    else {
        return false;
    };
    let dominant = [
        sums[0] as f64 / count as f64,
        sums[1] as f64 / count as f64,
        sums[2] as f64 / count as f64,
    ];
    let tol = cfg.color_tolerance as f64;
    let near = img
        .pixels()
        .filter(|px| (0..3).all(|c| (px.0[c] as f64 - dominant[c]).abs() <= tol))
        .count() as f64;
    let total = (img.width() as u64 * img.height() as u64) as f64;
    total > 0.0 && near / total >= cfg.background_dominance
}

// ---------------------------------------------------------------------------
// Selection and filtering
// ---------------------------------------------------------------------------

/// Picks the highest-scoring candidate mask; ties resolve to the earliest
/// candidate in list order.
pub fn select_mask_by_clip(record: &mut InstanceRecord) {
    assert!(!record.candidates.is_empty(), "record has no candidates");
    let mut best = 0usize;
    for (i, cand) in record.candidates.iter().enumerate().skip(1) {
        if cand.clip_score > record.candidates[best].clip_score {
            best = i;
        }
    }
    record.chosen = Some(best);
    record.clip_score = Some(record.candidates[best].clip_score);
}

/// Applies [`select_mask_by_clip`] to every record.
pub fn select_all(pool: &mut PoolManifest) {
    for record in &mut pool.records {
        select_mask_by_clip(record);
    }
}

/// Per-category score threshold: `min(t, max(scores) - d)`. Categories with
/// no records are absent from the map.
pub fn category_thresholds(pool: &PoolManifest, cfg: &FilterConfig) -> BTreeMap<u64, f64> {
    let mut max_scores: BTreeMap<u64, f64> = BTreeMap::new();
    for record in &pool.records {
        let score = record
            .clip_score
            .expect("category_thresholds requires selected records");
        let entry = max_scores
            .entry(record.category_id)
            .or_insert(f64::NEG_INFINITY);
        *entry = entry.max(score);
    }
    max_scores
        .into_iter()
        .map(|(cat, max)| (cat, cfg.clip_threshold.min(max - cfg.subtractive)))
        .collect()
}

/// Loads instance images on demand during filtering and composition.
pub trait ImageLoader: Sync {
    fn load(&self, path: &str) -> Result<image::RgbImage>;
}

/// Resolves manifest-relative paths under a root directory.
pub struct FsImageLoader {
    root: PathBuf,
}

impl FsImageLoader {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        FsImageLoader { root: root.into() }
    }
}

impl ImageLoader for FsImageLoader {
    fn load(&self, path: &str) -> Result<image::RgbImage> {
        let full = self.root.join(path);
        let img = image::open(&full).map_err(|source| match source {
            image::ImageError::IoError(e) => Error::Io(e),
            other => Error::Image {
                path: full.display().to_string(),
                source: other,
            },
        })?;
        Ok(img.to_rgb8())
    }
}

/// First rule that rejected a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectRule {
    Area,
    ClipThreshold,
    Background,
    Io,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: u64,
    pub kept: u64,
    /// Thresholds actually applied, per category.
    pub thresholds: BTreeMap<u64, f64>,
    /// rule -> category id -> rejection count.
    pub rejected: BTreeMap<RejectRule, BTreeMap<u64, u64>>,
}

impl FilterReport {
    pub fn rejected_total(&self) -> u64 {
        self.rejected.values().flat_map(|m| m.values()).sum()
    }
}

/// Filters the pool. Rules run cheapest first — mask area, then the
/// category score threshold, then (for sources listed in
/// `require_background_check_for`) the background test, which is the only
/// rule that touches pixel data. Each rejection is attributed to the first
/// failing rule; image I/O failures reject the record with [`RejectRule::Io`]
/// and the pipeline continues.
///
/// Records without a chosen candidate are selected implicitly first.
pub fn filter_pool(
    pool: &PoolManifest,
    cfg: &FilterConfig,
    loader: &dyn ImageLoader,
) -> (PoolManifest, FilterReport) {
    let mut selected = pool.clone();
    for record in &mut selected.records {
        if record.chosen.is_none() {
            select_mask_by_clip(record);
        }
    }
    let thresholds = category_thresholds(&selected, cfg);

    let verdicts: Vec<Option<RejectRule>> = selected
        .records
        .par_iter()
        .map(|record| {
            let fraction = record.area_fraction().expect("selected record");
            if fraction < cfg.area_min || fraction > cfg.area_max {
                return Some(RejectRule::Area);
            }
            let score = record.clip_score.expect("selected record");
            if score < thresholds[&record.category_id] {
                return Some(RejectRule::ClipThreshold);
            }
            if cfg.require_background_check_for.contains(&record.source) {
                match loader.load(&record.image_path) {
                    Ok(img) => {
                        if !background_simplicity(&img, cfg) {
                            return Some(RejectRule::Background);
                        }
                    }
                    Err(err) => {
                        log::warn!("record `{}`: image load failed: {err}", record.id);
                        return Some(RejectRule::Io);
                    }
                }
            }
            None
        })
        .collect();

    let mut report = FilterReport {
        input: selected.records.len() as u64,
        kept: 0,
        thresholds,
        rejected: BTreeMap::new(),
    };
    let mut kept = Vec::new();
    for (record, verdict) in selected.records.into_iter().zip(verdicts) {
        match verdict {
            None => {
                report.kept += 1;
                kept.push(record);
            }
            Some(rule) => {
                *report
                    .rejected
                    .entry(rule)
                    .or_default()
                    .entry(record.category_id)
                    .or_insert(0) += 1;
            }
        }
    }
    (PoolManifest { records: kept }, report)
}

// ---------------------------------------------------------------------------
// Retention curves
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetentionRow {
    pub band: FrequencyBand,
    pub threshold: f64,
    /// Fraction of the band's records passing the score-threshold rule.
    pub retention: f64,
    /// Envelope: minimum / maximum per-category retention within the band.
    pub category_min: f64,
    pub category_max: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RetentionTable {
    pub rows: Vec<RetentionRow>,
}

impl RetentionTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("band,threshold,retention,category_min,category_max\n");
        for row in &self.rows {
            let band = match row.band {
                FrequencyBand::Rare => "rare",
                FrequencyBand::Common => "common",
                FrequencyBand::Frequent => "frequent",
                FrequencyBand::Unknown => "unknown",
            };
            out.push_str(&format!(
                "{band},{:.6},{:.6},{:.6},{:.6}\n",
                row.threshold, row.retention, row.category_min, row.category_max
            ));
        }
        out
    }
}

/// Sweeps the score-threshold rule over `thresholds` and reports, per
/// frequency band, the fraction of records retained, with per-category
/// min/max retention as the envelope. Bands without records are absent.
pub fn retention_curve(
    pool: &PoolManifest,
    thresholds: &[f64],
    subtractive: f64,
    bands: &BTreeMap<u64, FrequencyBand>,
) -> RetentionTable {
    // category -> chosen scores
    let mut scores: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for record in &pool.records {
        let score = record
            .clip_score
            .expect("retention_curve requires selected records");
        scores.entry(record.category_id).or_default().push(score);
    }

    let mut rows = Vec::new();
    for band in [
        FrequencyBand::Rare,
        FrequencyBand::Common,
        FrequencyBand::Frequent,
    ] {
        let band_categories: Vec<(&u64, &Vec<f64>)> = scores
            .iter()
            .filter(|(cat, _)| bands.get(cat).copied() == Some(band))
            .collect();
        if band_categories.is_empty() {
            continue;
        }
        for &t in thresholds {
            let mut passing = 0usize;
            let mut total = 0usize;
            let mut cat_min = f64::INFINITY;
            let mut cat_max = f64::NEG_INFINITY;
            for (_, cat_scores) in &band_categories {
                let max = cat_scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let thres = t.min(max - subtractive);
                let pass = cat_scores.iter().filter(|&&s| s >= thres).count();
                passing += pass;
                total += cat_scores.len();
                let rate = pass as f64 / cat_scores.len() as f64;
                cat_min = cat_min.min(rate);
                cat_max = cat_max.max(rate);
            }
            rows.push(RetentionRow {
                band,
                threshold: t,
                retention: passing as f64 / total as f64,
                category_min: cat_min,
                category_max: cat_max,
            });
        }
    }
    RetentionTable { rows }
}
