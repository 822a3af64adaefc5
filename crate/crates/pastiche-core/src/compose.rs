//! Composition of training images: seeded planning, paste rendering and
//! occlusion-correct annotation updates.
//!
//! Every composed sample draws its own RNG stream from
//! `(seed, background image id, repeat index)`, so output is byte-identical
//! for a fixed seed regardless of worker count or scheduling.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use image::codecs::png;
use image::{ImageEncoder, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coco::{serialize_dataset, Annotation, Dataset, ImageInfo, Provenance};
use crate::error::{Error, Result};
use crate::mask::{BBox, Bitmap, RleMask};
use crate::pool::{ImageLoader, InstanceRecord, PoolManifest};
use crate::stats::ScaleStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// Paste centers drawn uniformly over the whole background.
    Random,
    /// Paste centers snap to the centers of existing background boxes;
    /// falls back to random when the background has no annotations.
    Reference,
}

/// Only binary overwrite compositing is implemented; the enum leaves room
/// for soft blending without changing the config schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Blending {
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComposeConfig {
    /// Upper bound on pastes per sample; the count is uniform on [1, n_max].
    pub n_max: u32,
    pub placement: Placement,
    pub seed: u64,
    pub blending: Blending,
    /// Drop annotations whose visible fraction falls below this value.
    /// Zero drops only fully occluded annotations.
    pub occlusion_drop_fraction: f64,
    /// Composed samples per background image. Zero passes the source
    /// dataset through untouched.
    pub repeat: u32,
    pub scale_min: f64,
    pub scale_max: f64,
}

impl Default for ComposeConfig {
    fn default() -> Self {
        ComposeConfig {
            n_max: 20,
            placement: Placement::Random,
            seed: 0,
            blending: Blending::Binary,
            occlusion_drop_fraction: 0.0,
            repeat: 1,
            scale_min: 0.02,
            scale_max: 0.95,
        }
    }
}

impl ComposeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_max < 1 {
            return Err(Error::Config {
                path: "compose.n_max".into(),
                message: "must be at least 1".into(),
            });
        }
        if !(0.0..1.0).contains(&self.occlusion_drop_fraction) {
            return Err(Error::Config {
                path: "compose.occlusion_drop_fraction".into(),
                message: format!("must lie in [0, 1), got {}", self.occlusion_drop_fraction),
            });
        }
        if !(self.scale_min > 0.0 && self.scale_min < self.scale_max && self.scale_max <= 1.0) {
            return Err(Error::Config {
                path: "compose.scale_min/scale_max".into(),
                message: format!(
                    "need 0 < scale_min < scale_max <= 1, got [{}, {}]",
                    self.scale_min, self.scale_max
                ),
            });
        }
        Ok(())
    }

    pub fn scale_clamp(&self) -> (f64, f64) {
        (self.scale_min, self.scale_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PasteAction {
    pub instance_id: String,
    pub scale: f64,
    pub center: (f64, f64),
    pub z: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionPlan {
    pub background_id: u64,
    pub seed: u64,
    pub actions: Vec<PasteAction>,
}

/// Full-avalanche 64-bit mix (splitmix64 finalizer).
fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG stream for one composed sample.
pub fn sample_rng(seed: u64, background_id: u64, repeat_index: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(seed, background_id), repeat_index as u64))
}

/// Draws a composition plan: a uniform paste count on [1, n_max], categories
/// uniform with replacement over categories present in the pool, one uniform
/// instance per drawn category, a Gaussian scale per instance and a paste
/// center according to the placement strategy.
pub fn plan_sample(
    rng: &mut impl Rng,
    pool: &PoolManifest,
    stats: &ScaleStats,
    background: &ImageInfo,
    background_annotations: &[&Annotation],
    cfg: &ComposeConfig,
) -> Result<CompositionPlan> {
    let by_category = pool.by_category();
    if by_category.is_empty() {
        return Err(Error::EmptyPool);
    }
    let categories: Vec<u64> = by_category.keys().copied().collect();
    let (w, h) = (background.width as f64, background.height as f64);

    let n = rng.random_range(1..=cfg.n_max);
    let mut actions = Vec::with_capacity(n as usize);
    for z in 0..n {
        let category = categories[rng.random_range(0..categories.len())];
        let members = &by_category[&category];
        let record = &pool.records[members[rng.random_range(0..members.len())]];
        let scale = stats.sample(category, cfg.scale_clamp(), rng);
        let center = match cfg.placement {
            Placement::Reference if !background_annotations.is_empty() => {
                let ann = background_annotations[rng.random_range(0..background_annotations.len())];
                (
                    ann.bbox.x as f64 + ann.bbox.w as f64 / 2.0,
                    ann.bbox.y as f64 + ann.bbox.h as f64 / 2.0,
                )
            }
            _ => (rng.random_range(0.0..w), rng.random_range(0.0..h)),
        };
        actions.push(PasteAction {
            instance_id: record.id.clone(),
            scale,
            center,
            z,
        });
    }
    Ok(CompositionPlan {
        background_id: background.id,
        seed: cfg.seed,
        actions,
    })
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

/// A pool instance resolved to pixels.
pub struct Instance {
    pub category_id: u64,
    pub image: RgbImage,
    pub mask: Bitmap,
}

pub trait InstanceProvider: Sync {
    fn fetch(&self, id: &str) -> Result<Instance>;
}

/// Resolves instances from a pool manifest plus an image loader.
pub struct PoolInstanceProvider<'a> {
    index: HashMap<&'a str, &'a InstanceRecord>,
    loader: &'a dyn ImageLoader,
}

impl<'a> PoolInstanceProvider<'a> {
    pub fn new(pool: &'a PoolManifest, loader: &'a dyn ImageLoader) -> Self {
        PoolInstanceProvider {
            index: pool.records.iter().map(|r| (r.id.as_str(), r)).collect(),
            loader,
        }
    }
}

impl InstanceProvider for PoolInstanceProvider<'_> {
    fn fetch(&self, id: &str) -> Result<Instance> {
        let record = self.index.get(id).ok_or_else(|| {
            Error::Integrity(format!("plan references unknown pool record `{id}`"))
        })?;
        let mask = record
            .chosen_mask()
            .ok_or_else(|| Error::Integrity(format!("pool record `{id}` has no chosen mask")))?;
        let image = self.loader.load(&record.image_path)?;
        if image.width() != record.width || image.height() != record.height {
            return Err(Error::Integrity(format!(
                "record `{id}` image is {}x{}, manifest says {}x{}",
                image.width(),
                image.height(),
                record.width,
                record.height
            )));
        }
        Ok(Instance {
            category_id: record.category_id,
            image,
            mask: mask.decode(),
        })
    }
}

/// A paste that reached the canvas: its category plus the clipped
/// canvas-resolution mask.
#[derive(Debug, Clone)]
pub struct PastedInstance {
    pub instance_id: String,
    pub category_id: u64,
    pub mask: Bitmap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedAction {
    pub z: u32,
    pub instance_id: String,
    pub reason: String,
}

/// An annotation after occlusion handling, not yet assigned an id.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibleAnnotation {
    pub category_id: u64,
    pub mask: RleMask,
    pub bbox: BBox,
    pub area: u64,
    pub provenance: Provenance,
}

pub struct ComposedSample {
    pub image: RgbImage,
    pub annotations: Vec<VisibleAnnotation>,
    pub plan: CompositionPlan,
    pub skipped: Vec<SkippedAction>,
}

/// Applies z-order occlusion. Every annotation's visible mask is its mask
/// minus the union of all strictly later pasted masks; background
/// annotations all sit below every paste and never occlude each other.
/// Annotations with no visible pixels (or a visible fraction below
/// `occlusion_drop_fraction`) are dropped; bbox and area are recomputed
/// from the visible mask.
pub fn update_annotations(
    background: &[&Annotation],
    pasted: &[PastedInstance],
    occlusion_drop_fraction: f64,
) -> Vec<VisibleAnnotation> {
    let dims = pasted
        .first()
        .map(|p| (p.mask.width(), p.mask.height()))
        .or_else(|| {
            background
                .first()
                .map(|a| (a.mask.width(), a.mask.height()))
        });
    let Some((w, h)) = dims else {
        return Vec::new();
    };

    let dropped = |visible: u64, full: u64| -> bool {
        visible == 0
            || (occlusion_drop_fraction > 0.0
                && (visible as f64) < occlusion_drop_fraction * full as f64)
    };

    // walk pastes top-down, accumulating the union of everything above
    let mut covered = Bitmap::new(w, h);
    let mut visible_pasted: Vec<(usize, Bitmap)> = Vec::with_capacity(pasted.len());
    for (i, paste) in pasted.iter().enumerate().rev() {
        visible_pasted.push((i, paste.mask.occlude_against(&mut covered)));
    }
    visible_pasted.reverse();

    let mut out = Vec::new();
    for ann in background {
        let mut visible = ann.mask.decode();
        visible.subtract(&covered);
        let area = visible.count_ones();
        if dropped(area, ann.area) {
            continue;
        }
        let mask = RleMask::encode(&visible);
        out.push(VisibleAnnotation {
            category_id: ann.category_id,
            bbox: mask.bbox(),
            area,
            mask,
            provenance: Provenance::Original,
        });
    }
    for (i, visible) in visible_pasted {
        let full = pasted[i].mask.count_ones();
        let area = visible.count_ones();
        if dropped(area, full) {
            continue;
        }
        let mask = RleMask::encode(&visible);
        out.push(VisibleAnnotation {
            category_id: pasted[i].category_id,
            bbox: mask.bbox(),
            area,
            mask,
            provenance: Provenance::Pasted,
        });
    }
    out
}

fn bitmap_to_gray(mask: &Bitmap) -> image::GrayImage {
    image::GrayImage::from_fn(mask.width(), mask.height(), |x, y| {
        image::Luma([if mask.get(x, y) { 255 } else { 0 }])
    })
}

fn gray_to_bitmap(gray: &image::GrayImage) -> Bitmap {
    let mut b = Bitmap::new(gray.width(), gray.height());
    for (x, y, px) in gray.enumerate_pixels() {
        // re-binarize at 0.5 after bilinear resampling
        b.set(x, y, px.0[0] >= 128);
    }
    b
}

/// Renders a plan onto the background. Instances are resized by
/// `sqrt(scale^2 * H * W / mask_area)` (bilinear pixels, re-binarized
/// mask), centered on the planned point by their scaled mask bbox, clipped
/// to the canvas and painted in z order with binary overwrite. Actions
/// whose clipped mask comes out empty are skipped and recorded.
///
/// The instance is cropped to its mask bbox (padded by the bilinear
/// support) before resizing, so the cost scales with the object, not the
/// instance image.
pub fn render(
    plan: &CompositionPlan,
    instances: &dyn InstanceProvider,
    background_image: &RgbImage,
    background_annotations: &[&Annotation],
    cfg: &ComposeConfig,
) -> Result<ComposedSample> {
    let (canvas_w, canvas_h) = background_image.dimensions();
    let canvas_area = canvas_w as f64 * canvas_h as f64;
    let mut canvas = background_image.clone();
    let mut pasted: Vec<PastedInstance> = Vec::with_capacity(plan.actions.len());
    let mut skipped: Vec<SkippedAction> = Vec::new();

    for action in &plan.actions {
        let instance = instances.fetch(&action.instance_id)?;
        let source_area = instance.mask.count_ones();
        if source_area == 0 {
            skipped.push(SkippedAction {
                z: action.z,
                instance_id: action.instance_id.clone(),
                reason: "source mask is empty".into(),
            });
            continue;
        }
        let target_area = action.scale * action.scale * canvas_area;
        let factor = (target_area / source_area as f64).sqrt();

        // crop to the mask bbox plus the filter's support so boundary
        // interpolation has its real neighbors
        let source_bbox = RleMask::encode(&instance.mask).bbox();
        let pad = (1.0f64.max(1.0 / factor)).ceil() as u32 + 1;
        let crop_x = source_bbox.x.saturating_sub(pad);
        let crop_y = source_bbox.y.saturating_sub(pad);
        let crop_w = (source_bbox.x + source_bbox.w + pad).min(instance.image.width()) - crop_x;
        let crop_h = (source_bbox.y + source_bbox.h + pad).min(instance.image.height()) - crop_y;

        let scaled_w = ((crop_w as f64 * factor).round() as u32).max(1);
        let scaled_h = ((crop_h as f64 * factor).round() as u32).max(1);

        let cropped_rgb =
            image::imageops::crop_imm(&instance.image, crop_x, crop_y, crop_w, crop_h).to_image();
        let scaled_rgb = image::imageops::resize(
            &cropped_rgb,
            scaled_w,
            scaled_h,
            image::imageops::FilterType::Triangle,
        );
        let scaled_mask = gray_to_bitmap(&image::imageops::resize(
            &bitmap_to_gray(&instance.mask.crop(crop_x, crop_y, crop_w, crop_h)),
            scaled_w,
            scaled_h,
            image::imageops::FilterType::Triangle,
        ));
        let bbox = RleMask::encode(&scaled_mask).bbox();
        if bbox.area() == 0 {
            skipped.push(SkippedAction {
                z: action.z,
                instance_id: action.instance_id.clone(),
                reason: "scaled mask is empty".into(),
            });
            continue;
        }

        // position the scaled mask so its bbox center lands on the target
        let origin_x = (action.center.0 - (bbox.x as f64 + bbox.w as f64 / 2.0)).round() as i64;
        let origin_y = (action.center.1 - (bbox.y as f64 + bbox.h as f64 / 2.0)).round() as i64;

        let mut canvas_mask = Bitmap::new(canvas_w, canvas_h);
        let mut any = false;
        for x in bbox.x..bbox.x + bbox.w {
            let cx = origin_x + x as i64;
            if cx < 0 || cx >= canvas_w as i64 {
                continue;
            }
            for y in bbox.y..bbox.y + bbox.h {
                if !scaled_mask.get(x, y) {
                    continue;
                }
                let cy = origin_y + y as i64;
                if cy < 0 || cy >= canvas_h as i64 {
                    continue;
                }
                canvas_mask.set(cx as u32, cy as u32, true);
                canvas.put_pixel(cx as u32, cy as u32, *scaled_rgb.get_pixel(x, y));
                any = true;
            }
        }
        if !any {
            skipped.push(SkippedAction {
                z: action.z,
                instance_id: action.instance_id.clone(),
                reason: "clipped mask is empty".into(),
            });
            continue;
        }
        pasted.push(PastedInstance {
            instance_id: action.instance_id.clone(),
            category_id: instance.category_id,
            mask: canvas_mask,
        });
    }

    let annotations =
        update_annotations(background_annotations, &pasted, cfg.occlusion_drop_fraction);
    Ok(ComposedSample {
        image: canvas,
        annotations,
        plan: plan.clone(),
        skipped,
    })
}

// ---------------------------------------------------------------------------
// Dataset-level composition
// ---------------------------------------------------------------------------

pub struct ComposeInputs<'a> {
    pub pool: &'a PoolManifest,
    pub stats: &'a ScaleStats,
    pub dataset: &'a Dataset,
    /// Loads background images by their dataset `file_name`.
    pub backgrounds: &'a dyn ImageLoader,
    pub instances: &'a dyn InstanceProvider,
}

#[derive(Serialize)]
struct PlanTrace<'a> {
    image_id: u64,
    background_id: u64,
    seed: u64,
    actions: &'a [PasteAction],
    skipped: &'a [SkippedAction],
    passthrough: bool,
}

struct SampleOutput {
    image_info: ImageInfo,
    annotations: Vec<VisibleAnnotation>,
    trace: String,
}

fn write_png(path: &Path, img: &RgbImage) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let encoder = png::PngEncoder::new_with_quality(
        file,
        png::CompressionType::Fast,
        png::FilterType::Adaptive,
    );
    encoder
        .write_image(
            img.as_raw(),
            img.width(),
            img.height(),
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|source| Error::Image {
            path: path.display().to_string(),
            source,
        })
}

/// Composes `repeat` samples per background image and writes
/// `images/*.png`, `plans.ndjson` and `dataset.json` under `out_dir`.
///
/// Per-sample failures (unreadable instance, planning problems) degrade the
/// sample to a background passthrough with its original annotations and a
/// logged warning; an unreadable background image is a hard error since
/// there would be nothing to emit. With `repeat == 0` the source dataset is
/// written out unchanged.
///
/// `jobs` is the rayon worker count (0 = default). Output bytes depend only
/// on the inputs and the seed, never on `jobs`.
pub fn compose_dataset(
    inputs: &ComposeInputs,
    cfg: &ComposeConfig,
    out_dir: &Path,
    jobs: usize,
) -> Result<Dataset> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir.join("images"))?;

    if cfg.repeat == 0 {
        let out = inputs.dataset.clone();
        std::fs::write(out_dir.join("dataset.json"), serialize_dataset(&out))?;
        return Ok(out);
    }

    if inputs.pool.records.is_empty() {
        return Err(Error::EmptyPool);
    }
    if inputs.pool.records.iter().any(|r| r.chosen.is_none()) {
        return Err(Error::Integrity(
            "pool records must have chosen masks; run selection first".into(),
        ));
    }
    let known_categories: std::collections::BTreeSet<u64> =
        inputs.dataset.categories.iter().map(|c| c.id).collect();
    for record in &inputs.pool.records {
        if !known_categories.contains(&record.category_id) {
            return Err(Error::Integrity(format!(
                "pool record `{}` references category {} absent from the dataset category table",
                record.id, record.category_id
            )));
        }
    }

    // (background index, repeat index) -> sample index; ids are assigned
    // up front so file names are independent of execution order
    let samples: Vec<(usize, u32)> = (0..inputs.dataset.images.len())
        .flat_map(|i| (0..cfg.repeat).map(move |k| (i, k)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config {
            path: "jobs".into(),
            message: e.to_string(),
        })?;

    let outputs: Result<Vec<SampleOutput>> = pool.install(|| {
        samples
            .par_iter()
            .enumerate()
            .map(|(sample_index, &(bg_index, repeat_index))| {
                compose_one(inputs, cfg, out_dir, sample_index, bg_index, repeat_index)
            })
            .collect()
    });
    let outputs = outputs?;

    let mut dataset = Dataset {
        images: Vec::with_capacity(outputs.len()),
        annotations: Vec::new(),
        categories: inputs.dataset.categories.clone(),
    };
    let mut trace_file =
        std::io::BufWriter::new(std::fs::File::create(out_dir.join("plans.ndjson"))?);
    let mut next_annotation_id: u64 = 1;
    for output in outputs {
        let image_id = output.image_info.id;
        dataset.images.push(output.image_info);
        for visible in output.annotations {
            dataset.annotations.push(Annotation {
                id: next_annotation_id,
                image_id,
                category_id: visible.category_id,
                mask: visible.mask,
                bbox: visible.bbox,
                area: visible.area,
                provenance: visible.provenance,
            });
            next_annotation_id += 1;
        }
        trace_file.write_all(output.trace.as_bytes())?;
        trace_file.write_all(b"\n")?;
    }
    trace_file.flush()?;

    std::fs::write(out_dir.join("dataset.json"), serialize_dataset(&dataset))?;
    Ok(dataset)
}

fn compose_one(
    inputs: &ComposeInputs,
    cfg: &ComposeConfig,
    out_dir: &Path,
    sample_index: usize,
    bg_index: usize,
    repeat_index: u32,
) -> Result<SampleOutput> {
    let background = &inputs.dataset.images[bg_index];
    let bg_annotations = inputs.dataset.annotations_for_image(background.id);

    let bg_image = inputs.backgrounds.load(&background.file_name)?;
    if bg_image.width() != background.width || bg_image.height() != background.height {
        return Err(Error::Integrity(format!(
            "background image {} is {}x{}, dataset says {}x{}",
            background.id,
            bg_image.width(),
            bg_image.height(),
            background.width,
            background.height
        )));
    }

    let image_id = sample_index as u64 + 1;
    let file_name = format!("images/{image_id:012}.png");

    let mut rng = sample_rng(cfg.seed, background.id, repeat_index);
    let composed = plan_sample(
        &mut rng,
        inputs.pool,
        inputs.stats,
        background,
        &bg_annotations,
        cfg,
    )
    .and_then(|plan| render(&plan, inputs.instances, &bg_image, &bg_annotations, cfg));

    let (image, annotations, trace) = match composed {
        Ok(sample) => {
            let trace = serde_json::to_string(&PlanTrace {
                image_id,
                background_id: background.id,
                seed: cfg.seed,
                actions: &sample.plan.actions,
                skipped: &sample.skipped,
                passthrough: false,
            })
            .expect("serializable trace");
            (sample.image, sample.annotations, trace)
        }
        Err(err) => {
            log::warn!(
                "sample {sample_index} (background {}): {err}; emitting passthrough",
                background.id
            );
            let annotations: Vec<VisibleAnnotation> = bg_annotations
                .iter()
                .map(|a| VisibleAnnotation {
                    category_id: a.category_id,
                    mask: a.mask.clone(),
                    bbox: a.bbox,
                    area: a.area,
                    provenance: Provenance::Original,
                })
                .collect();
            let trace = serde_json::to_string(&PlanTrace {
                image_id,
                background_id: background.id,
                seed: cfg.seed,
                actions: &[],
                skipped: &[],
                passthrough: true,
            })
            .expect("serializable trace");
            (bg_image, annotations, trace)
        }
    };

    write_png(&out_dir.join(&file_name), &image)?;
    Ok(SampleOutput {
        image_info: ImageInfo {
            id: image_id,
            width: image.width(),
            height: image.height(),
            file_name,
        },
        annotations,
        trace,
    })
}
