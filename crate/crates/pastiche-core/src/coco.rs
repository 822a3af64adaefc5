//! COCO/LVIS dataset model with bit-reproducible JSON codecs.
//!
//! Parsing accepts polygon, compressed-RLE and uncompressed-RLE
//! segmentations; everything is normalized to [`RleMask`] at the owning
//! image's resolution and `bbox`/`area` are recomputed from the mask, so
//! every [`Annotation`] in the system satisfies the tight-bound and
//! popcount invariants by construction.
//!
//! Serialization always emits compressed RLE and pins the key order:
//! top level `images, annotations, categories`; image
//! `id, width, height, file_name`; annotation `id, image_id, category_id,
//! segmentation{size, counts}, bbox, area, iscrowd[, provenance]`;
//! category `id, name[, frequency]`. All numbers are integers, so equal
//! datasets serialize to identical bytes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{BBox, Bitmap, RleMask};

/// LVIS frequency band of a category; `Unknown` for plain COCO input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyBand {
    Rare,
    Common,
    Frequent,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Category {
    pub id: u64,
    pub name: String,
    pub frequency_band: FrequencyBand,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageInfo {
    pub id: u64,
    pub width: u32,
    pub height: u32,
    pub file_name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Original,
    Pasted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub mask: RleMask,
    pub bbox: BBox,
    pub area: u64,
    pub provenance: Provenance,
}

impl Annotation {
    /// Builds an annotation with `bbox` and `area` derived from the mask.
    pub fn from_mask(
        id: u64,
        image_id: u64,
        category_id: u64,
        mask: RleMask,
        provenance: Provenance,
    ) -> Self {
        let bbox = mask.bbox();
        let area = mask.area();
        Annotation {
            id,
            image_id,
            category_id,
            mask,
            bbox,
            area,
            provenance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub images: Vec<ImageInfo>,
    pub annotations: Vec<Annotation>,
    pub categories: Vec<Category>,
}

impl Dataset {
    pub fn image(&self, id: u64) -> Option<&ImageInfo> {
        self.images.iter().find(|i| i.id == id)
    }

    pub fn category(&self, id: u64) -> Option<&Category> {
        self.categories.iter().find(|c| c.id == id)
    }

    /// Per-category frequency bands, keyed by category id.
    pub fn band_table(&self) -> BTreeMap<u64, FrequencyBand> {
        self.categories
            .iter()
            .map(|c| (c.id, c.frequency_band))
            .collect()
    }

    pub fn annotations_for_image(&self, image_id: u64) -> Vec<&Annotation> {
        self.annotations
            .iter()
            .filter(|a| a.image_id == image_id)
            .collect()
    }
}

// ---------------------------------------------------------------------------
// JSON wire format
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct JsonDatasetIn {
    #[serde(default)]
    images: Vec<JsonImage>,
    #[serde(default)]
    annotations: Vec<JsonAnnotationIn>,
    #[serde(default)]
    categories: Vec<JsonCategoryIn>,
}

#[derive(Serialize, Deserialize)]
struct JsonImage {
    id: u64,
    width: u32,
    height: u32,
    #[serde(default)]
    file_name: String,
}

#[derive(Deserialize)]
struct JsonCategoryIn {
    id: u64,
    #[serde(default)]
    name: String,
    /// LVIS frequency marker: "r", "c" or "f".
    #[serde(default)]
    frequency: Option<String>,
}

#[derive(Deserialize)]
struct JsonAnnotationIn {
    id: u64,
    image_id: u64,
    category_id: u64,
    segmentation: JsonSegmentation,
    #[serde(default)]
    provenance: Option<Provenance>,
    // claims checked by validate_json, ignored (recomputed) by parse_dataset
    #[serde(default)]
    bbox: Option<[f64; 4]>,
    #[serde(default)]
    area: Option<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JsonSegmentation {
    Polygons(Vec<Vec<f64>>),
    CompressedRle { size: [u32; 2], counts: String },
    UncompressedRle { size: [u32; 2], counts: Vec<u32> },
}

#[derive(Serialize)]
struct JsonDatasetOut<'a> {
    images: &'a [JsonImage],
    annotations: Vec<JsonAnnotationOut<'a>>,
    categories: Vec<JsonCategoryOut<'a>>,
}

#[derive(Serialize)]
struct JsonCategoryOut<'a> {
    id: u64,
    name: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    frequency: Option<&'static str>,
}

#[derive(Serialize)]
struct JsonRleOut {
    size: [u32; 2],
    counts: String,
}

#[derive(Serialize)]
struct JsonAnnotationOut<'a> {
    id: u64,
    image_id: u64,
    category_id: u64,
    segmentation: JsonRleOut,
    bbox: [u32; 4],
    area: u64,
    iscrowd: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    provenance: Option<&'a Provenance>,
}

fn band_from_marker(marker: Option<&str>) -> FrequencyBand {
    match marker {
        Some("r") => FrequencyBand::Rare,
        Some("c") => FrequencyBand::Common,
        Some("f") => FrequencyBand::Frequent,
        _ => FrequencyBand::Unknown,
    }
}

fn band_to_marker(band: FrequencyBand) -> Option<&'static str> {
    match band {
        FrequencyBand::Rare => Some("r"),
        FrequencyBand::Common => Some("c"),
        FrequencyBand::Frequent => Some("f"),
        FrequencyBand::Unknown => None,
    }
}

/// Converts a serde line/column position into a byte offset.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut seen_lines = 1usize;
    let mut offset = 0usize;
    for (i, &b) in bytes.iter().enumerate() {
        if seen_lines == line {
            offset = i + column.saturating_sub(1);
            break;
        }
        if b == b'\n' {
            seen_lines += 1;
            offset = i + 1;
        }
    }
    offset.min(bytes.len())
}

/// Parses COCO or LVIS JSON into a validated [`Dataset`].
pub fn parse_dataset(bytes: &[u8]) -> Result<Dataset> {
    let raw: JsonDatasetIn = serde_json::from_slice(bytes).map_err(|e| Error::JsonParse {
        offset: byte_offset(bytes, e.line(), e.column()),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let mut images = Vec::with_capacity(raw.images.len());
    let mut image_dims: BTreeMap<u64, (u32, u32)> = BTreeMap::new();
    for im in raw.images {
        if im.id == 0 || im.width == 0 || im.height == 0 {
            return Err(Error::Integrity(format!(
                "image {} has non-positive id or dimensions",
                im.id
            )));
        }
        if image_dims.insert(im.id, (im.width, im.height)).is_some() {
            return Err(Error::Integrity(format!("duplicate image id {}", im.id)));
        }
        images.push(ImageInfo {
            id: im.id,
            width: im.width,
            height: im.height,
            file_name: im.file_name,
        });
    }

    let mut categories = Vec::with_capacity(raw.categories.len());
    let mut category_ids = BTreeSet::new();
    for cat in raw.categories {
        if cat.id == 0 {
            return Err(Error::Integrity("category id must be positive".into()));
        }
        if !category_ids.insert(cat.id) {
            return Err(Error::Integrity(format!(
                "duplicate category id {}",
                cat.id
            )));
        }
        categories.push(Category {
            id: cat.id,
            name: cat.name,
            frequency_band: band_from_marker(cat.frequency.as_deref()),
        });
    }

    let mut dangling: Vec<u64> = Vec::new();
    let mut annotations = Vec::with_capacity(raw.annotations.len());
    let mut annotation_ids = BTreeSet::new();
    for ann in raw.annotations {
        let Some(&(img_w, img_h)) = image_dims.get(&ann.image_id) else {
            dangling.push(ann.id);
            continue;
        };
        if !category_ids.contains(&ann.category_id) {
            dangling.push(ann.id);
            continue;
        }
        if ann.id == 0 || !annotation_ids.insert(ann.id) {
            return Err(Error::Integrity(format!(
                "annotation id {} is zero or duplicated",
                ann.id
            )));
        }
        let mask = match ann.segmentation {
            JsonSegmentation::Polygons(polys) => {
                RleMask::encode(&rasterize_polygons(&polys, img_w, img_h))
            }
            JsonSegmentation::CompressedRle { size, counts } => {
                let m = RleMask::from_compressed(&counts, size[0], size[1])?;
                check_mask_dims(ann.id, &m, img_w, img_h)?;
                m
            }
            JsonSegmentation::UncompressedRle { size, counts } => {
                let m = RleMask::from_counts(size[0], size[1], counts)?;
                check_mask_dims(ann.id, &m, img_w, img_h)?;
                m
            }
        };
        if mask.is_empty() {
            return Err(Error::Integrity(format!(
                "annotation {} has an empty mask",
                ann.id
            )));
        }
        annotations.push(Annotation::from_mask(
            ann.id,
            ann.image_id,
            ann.category_id,
            mask,
            ann.provenance.unwrap_or(Provenance::Original),
        ));
    }

    if !dangling.is_empty() {
        return Err(Error::Integrity(format!(
            "annotations reference missing images or categories: ids {dangling:?}"
        )));
    }

    Ok(Dataset {
        images,
        annotations,
        categories,
    })
}

fn check_mask_dims(ann_id: u64, m: &RleMask, img_w: u32, img_h: u32) -> Result<()> {
    if m.width() != img_w || m.height() != img_h {
        return Err(Error::Integrity(format!(
            "annotation {ann_id} mask is {}x{} but its image is {img_h}x{img_w}",
            m.height(),
            m.width()
        )));
    }
    Ok(())
}

/// Serializes with the pinned key order documented at module level.
pub fn serialize_dataset(d: &Dataset) -> Vec<u8> {
    let images: Vec<JsonImage> = d
        .images
        .iter()
        .map(|im| JsonImage {
            id: im.id,
            width: im.width,
            height: im.height,
            file_name: im.file_name.clone(),
        })
        .collect();
    let annotations: Vec<JsonAnnotationOut> = d
        .annotations
        .iter()
        .map(|a| JsonAnnotationOut {
            id: a.id,
            image_id: a.image_id,
            category_id: a.category_id,
            segmentation: JsonRleOut {
                size: [a.mask.height(), a.mask.width()],
                counts: a.mask.to_compressed(),
            },
            bbox: [a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h],
            area: a.area,
            iscrowd: 0,
            provenance: match a.provenance {
                Provenance::Pasted => Some(&a.provenance),
                Provenance::Original => None,
            },
        })
        .collect();
    let categories: Vec<JsonCategoryOut> = d
        .categories
        .iter()
        .map(|c| JsonCategoryOut {
            id: c.id,
            name: &c.name,
            frequency: band_to_marker(c.frequency_band),
        })
        .collect();
    let out = JsonDatasetOut {
        images: &images,
        annotations,
        categories,
    };
    serde_json::to_vec(&out).expect("dataset serialization cannot fail")
}

// ---------------------------------------------------------------------------
// Polygon rasterization
// ---------------------------------------------------------------------------

/// Rasterizes polygons with the even-odd rule at pixel centers and unions
/// the results. Vertices are `[x0, y0, x1, y1, ...]` in pixel coordinates.
pub fn rasterize_polygons(polygons: &[Vec<f64>], width: u32, height: u32) -> Bitmap {
    let mut bitmap = Bitmap::new(width, height);
    for poly in polygons {
        rasterize_into(poly, &mut bitmap);
    }
    bitmap
}

fn rasterize_into(poly: &[f64], bitmap: &mut Bitmap) {
    let n = poly.len() / 2;
    if n < 3 {
        return;
    }
    let width = bitmap.width();
    let height = bitmap.height();
    let mut crossings: Vec<f64> = Vec::new();
    for row in 0..height {
        let yc = row as f64 + 0.5;
        crossings.clear();
        for i in 0..n {
            let (x0, y0) = (poly[2 * i], poly[2 * i + 1]);
            let j = (i + 1) % n;
            let (x1, y1) = (poly[2 * j], poly[2 * j + 1]);
            // half-open rule on y avoids double-counting shared vertices
            if (y0 <= yc && yc < y1) || (y1 <= yc && yc < y0) {
                crossings.push(x0 + (yc - y0) / (y1 - y0) * (x1 - x0));
            }
        }
        crossings.sort_by(|a, b| a.partial_cmp(b).expect("finite crossings"));
        for pair in crossings.chunks_exact(2) {
            // pixel centers x+0.5 inside [pair[0], pair[1])
            let lo = (pair[0] - 0.5).ceil().max(0.0) as i64;
            let hi = (pair[1] - 0.5).ceil().min(width as f64) as i64;
            for x in lo..hi {
                bitmap.set(x as u32, row, true);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Validator
// ---------------------------------------------------------------------------

/// Checks every dataset invariant and returns the list of violations.
pub fn validation_violations(d: &Dataset) -> Vec<String> {
    let mut violations = Vec::new();

    let mut image_dims: BTreeMap<u64, (u32, u32)> = BTreeMap::new();
    for im in &d.images {
        if im.id == 0 {
            violations.push(format!("image id 0 (file `{}`)", im.file_name));
        }
        if im.width == 0 || im.height == 0 {
            violations.push(format!("image {} has zero area", im.id));
        }
        if image_dims.insert(im.id, (im.width, im.height)).is_some() {
            violations.push(format!("duplicate image id {}", im.id));
        }
    }

    let mut category_ids = BTreeSet::new();
    for cat in &d.categories {
        if cat.id == 0 {
            violations.push(format!("category `{}` has id 0", cat.name));
        }
        if !category_ids.insert(cat.id) {
            violations.push(format!("duplicate category id {}", cat.id));
        }
    }

    let mut ann_ids = BTreeSet::new();
    for ann in &d.annotations {
        if ann.id == 0 {
            violations.push("annotation id 0".into());
        }
        if !ann_ids.insert(ann.id) {
            violations.push(format!("duplicate annotation id {}", ann.id));
        }
        let Some(&(img_w, img_h)) = image_dims.get(&ann.image_id) else {
            violations.push(format!(
                "annotation {} references missing image {}",
                ann.id, ann.image_id
            ));
            continue;
        };
        if !category_ids.contains(&ann.category_id) {
            violations.push(format!(
                "annotation {} references missing category {}",
                ann.id, ann.category_id
            ));
        }
        if ann.mask.width() != img_w || ann.mask.height() != img_h {
            violations.push(format!(
                "annotation {} mask dims {}x{} do not match image {}x{}",
                ann.id,
                ann.mask.height(),
                ann.mask.width(),
                img_h,
                img_w
            ));
            continue;
        }
        let total: u64 = ann.mask.counts().iter().map(|&c| c as u64).sum();
        if total != img_w as u64 * img_h as u64 {
            violations.push(format!("annotation {} RLE counts sum mismatch", ann.id));
        }
        if ann.area == 0 {
            violations.push(format!("annotation {} has zero area", ann.id));
        }
        if ann.area != ann.mask.area() {
            violations.push(format!(
                "annotation {} area {} != mask popcount {}",
                ann.id,
                ann.area,
                ann.mask.area()
            ));
        }
        if ann.bbox != ann.mask.bbox() {
            violations.push(format!(
                "annotation {} bbox {:?} is not the tight mask bound {:?}",
                ann.id,
                ann.bbox,
                ann.mask.bbox()
            ));
        }
    }

    violations
}

/// Errors unless the dataset passes every invariant.
pub fn validate_dataset(d: &Dataset) -> Result<()> {
    let violations = validation_violations(d);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(violations))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DatasetSummary {
    pub images: usize,
    pub annotations: usize,
    pub categories: usize,
}

/// Validates a dataset file against the claims it makes, collecting every
/// violation instead of stopping at the first.
///
/// Unlike [`parse_dataset`] (which recomputes bbox/area and rejects broken
/// references outright), this checks the stored values: referential
/// integrity, id uniqueness, RLE consistency, mask emptiness, and — for
/// RLE-segmented annotations — that the stored `bbox` and `area` equal the
/// mask-derived ones exactly. Polygon annotations skip the bbox/area claim
/// check, since stored values typically come from other rasterizers.
/// Malformed JSON is still a hard error.
pub fn validate_json(bytes: &[u8]) -> Result<(DatasetSummary, Vec<String>)> {
    let raw: JsonDatasetIn = serde_json::from_slice(bytes).map_err(|e| Error::JsonParse {
        offset: byte_offset(bytes, e.line(), e.column()),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let summary = DatasetSummary {
        images: raw.images.len(),
        annotations: raw.annotations.len(),
        categories: raw.categories.len(),
    };
    let mut violations = Vec::new();

    let mut image_dims: BTreeMap<u64, (u32, u32)> = BTreeMap::new();
    for im in &raw.images {
        if im.id == 0 {
            violations.push(format!("image id 0 (file `{}`)", im.file_name));
        }
        if im.width == 0 || im.height == 0 {
            violations.push(format!("image {} has zero area", im.id));
        }
        if image_dims.insert(im.id, (im.width, im.height)).is_some() {
            violations.push(format!("duplicate image id {}", im.id));
        }
    }
    let mut category_ids = BTreeSet::new();
    for cat in &raw.categories {
        if cat.id == 0 {
            violations.push(format!("category `{}` has id 0", cat.name));
        }
        if !category_ids.insert(cat.id) {
            violations.push(format!("duplicate category id {}", cat.id));
        }
    }

    let mut ann_ids = BTreeSet::new();
    for ann in &raw.annotations {
        if ann.id == 0 {
            violations.push("annotation id 0".into());
        }
        if !ann_ids.insert(ann.id) {
            violations.push(format!("duplicate annotation id {}", ann.id));
        }
        if !category_ids.contains(&ann.category_id) {
            violations.push(format!(
                "annotation {} references missing category {}",
                ann.id, ann.category_id
            ));
        }
        let Some(&(img_w, img_h)) = image_dims.get(&ann.image_id) else {
            violations.push(format!(
                "annotation {} references missing image {}",
                ann.id, ann.image_id
            ));
            continue;
        };

        let (mask, claims_checkable) = match &ann.segmentation {
            JsonSegmentation::Polygons(polys) => (
                Ok(RleMask::encode(&rasterize_polygons(polys, img_w, img_h))),
                false,
            ),
            JsonSegmentation::CompressedRle { size, counts } => {
                (RleMask::from_compressed(counts, size[0], size[1]), true)
            }
            JsonSegmentation::UncompressedRle { size, counts } => {
                (RleMask::from_counts(size[0], size[1], counts.clone()), true)
            }
        };
        let mask = match mask {
            Ok(mask) => mask,
            Err(err) => {
                violations.push(format!("annotation {}: {err}", ann.id));
                continue;
            }
        };
        if mask.width() != img_w || mask.height() != img_h {
            violations.push(format!(
                "annotation {} mask is {}x{} but its image is {img_h}x{img_w}",
                ann.id,
                mask.height(),
                mask.width(),
            ));
            continue;
        }
        if mask.is_empty() {
            violations.push(format!("annotation {} has an empty mask", ann.id));
            continue;
        }
        if claims_checkable {
            let derived_bbox = mask.bbox();
            let derived_area = mask.area();
            if let Some(area) = ann.area {
                if area != derived_area as f64 {
                    violations.push(format!(
                        "annotation {} claims area {area}, mask popcount is {derived_area}",
                        ann.id
                    ));
                }
            }
            if let Some(bbox) = ann.bbox {
                let derived = [
                    derived_bbox.x as f64,
                    derived_bbox.y as f64,
                    derived_bbox.w as f64,
                    derived_bbox.h as f64,
                ];
                if bbox != derived {
                    violations.push(format!(
                        "annotation {} claims bbox {bbox:?}, tight mask bound is {derived:?}",
                        ann.id
                    ));
                }
            }
        }
    }
    Ok((summary, violations))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_dataset_parses() {
        let json = br#"{"images":[{"id":1,"width":4,"height":4,"file_name":"a.png"}],"annotations":[],"categories":[]}"#;
        let d = parse_dataset(json).unwrap();
        assert_eq!(d.images.len(), 1);
        assert!(d.annotations.is_empty());
    }

    #[test]
    fn full_image_rectangle_polygon() {
        let json = br#"{
            "images":[{"id":1,"width":4,"height":4,"file_name":"a.png"}],
            "annotations":[{"id":1,"image_id":1,"category_id":7,
                "segmentation":[[0.0,0.0, 4.0,0.0, 4.0,4.0, 0.0,4.0]]}],
            "categories":[{"id":7,"name":"square"}]
        }"#;
        let d = parse_dataset(json).unwrap();
        let ann = &d.annotations[0];
        assert_eq!(ann.area, 16);
        assert_eq!(
            ann.bbox,
            BBox {
                x: 0,
                y: 0,
                w: 4,
                h: 4
            }
        );
    }

    #[test]
    fn empty_dataset_serializes_three_arrays() {
        let out = serialize_dataset(&Dataset::default());
        assert_eq!(
            out,
            br#"{"images":[],"annotations":[],"categories":[]}"#.to_vec()
        );
    }

    #[test]
    fn malformed_json_reports_byte_offset() {
        let json = b"{\"images\": [,]}";
        let err = parse_dataset(json).unwrap_err();
        match err {
            Error::JsonParse { offset, .. } => assert_eq!(offset, 12),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn dangling_references_list_annotation_ids() {
        let json = br#"{
            "images":[{"id":1,"width":4,"height":4,"file_name":"a.png"}],
            "annotations":[
              {"id":11,"image_id":2,"category_id":7,"segmentation":{"size":[4,4],"counts":[0,16]}},
              {"id":12,"image_id":1,"category_id":9,"segmentation":{"size":[4,4],"counts":[0,16]}}
            ],
            "categories":[{"id":7,"name":"square"}]
        }"#;
        let err = parse_dataset(json).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("11") && msg.contains("12"), "{msg}");
    }

    #[test]
    fn lvis_frequency_maps_to_bands() {
        let json = br#"{
            "images":[],"annotations":[],
            "categories":[
              {"id":1,"name":"a","frequency":"r"},
              {"id":2,"name":"b","frequency":"c"},
              {"id":3,"name":"d","frequency":"f"},
              {"id":4,"name":"e"}
            ]
        }"#;
        let d = parse_dataset(json).unwrap();
        let bands: Vec<FrequencyBand> = d.categories.iter().map(|c| c.frequency_band).collect();
        assert_eq!(
            bands,
            vec![
                FrequencyBand::Rare,
                FrequencyBand::Common,
                FrequencyBand::Frequent,
                FrequencyBand::Unknown
            ]
        );
    }

    #[test]
    fn serialize_parse_is_idempotent() {
        let json = br#"{
            "images":[{"id":1,"width":6,"height":5,"file_name":"a.png"}],
            "annotations":[{"id":1,"image_id":1,"category_id":7,
                "segmentation":[[1.0,1.0, 4.0,1.0, 4.0,4.0, 1.0,4.0]]}],
            "categories":[{"id":7,"name":"square","frequency":"r"}]
        }"#;
        let d1 = parse_dataset(json).unwrap();
        let bytes1 = serialize_dataset(&d1);
        let d2 = parse_dataset(&bytes1).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(bytes1, serialize_dataset(&d2));
    }

    #[test]
    fn rle_annotation_emits_size_and_counts_string() {
        let json = br#"{
            "images":[{"id":1,"width":4,"height":3,"file_name":"a.png"}],
            "annotations":[{"id":1,"image_id":1,"category_id":7,
                "segmentation":{"size":[3,4],"counts":[3,3,6]}}],
            "categories":[{"id":7,"name":"square"}]
        }"#;
        let d = parse_dataset(json).unwrap();
        let out: serde_json::Value = serde_json::from_slice(&serialize_dataset(&d)).unwrap();
        let seg = &out["annotations"][0]["segmentation"];
        assert_eq!(seg["size"], serde_json::json!([3, 4]));
        assert!(seg["counts"].is_string());
        let counts = seg["counts"].as_str().unwrap();
        let back = RleMask::from_compressed(counts, 3, 4).unwrap();
        assert_eq!(back.counts(), &[3, 3, 6]);
    }

    #[test]
    fn rasterizer_triangle_matches_pixel_center_oracle() {
        // oracle: even-odd point-in-polygon test at each pixel center
        let poly = vec![1.0, 1.0, 8.0, 2.0, 3.0, 7.5];
        let b = rasterize_polygons(std::slice::from_ref(&poly), 10, 9);
        for y in 0..9u32 {
            for x in 0..10u32 {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let mut inside = false;
                let n = poly.len() / 2;
                for i in 0..n {
                    let (x0, y0) = (poly[2 * i], poly[2 * i + 1]);
                    let j = (i + 1) % n;
                    let (x1, y1) = (poly[2 * j], poly[2 * j + 1]);
                    if (y0 <= py && py < y1) || (y1 <= py && py < y0) {
                        let cx = x0 + (py - y0) / (y1 - y0) * (x1 - x0);
                        if px >= cx {
                            inside = !inside;
                        }
                    }
                }
                assert_eq!(b.get(x, y), inside, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn ten_image_fixture_roundtrips_to_equal_dataset() {
        let bytes = std::fs::read(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/tests/fixtures/coco_ten_images.json"
        ))
        .unwrap();
        let d1 = parse_dataset(&bytes).unwrap();
        assert_eq!(d1.images.len(), 10);
        assert!(d1.annotations.len() >= 10);
        validate_dataset(&d1).unwrap();

        let serialized = serialize_dataset(&d1);
        let d2 = parse_dataset(&serialized).unwrap();
        assert_eq!(d1, d2, "structural equality after one roundtrip");
        assert_eq!(
            serialized,
            serialize_dataset(&d2),
            "byte-stable reserialization"
        );

        // the serialized form also passes the claim-checking validator
        let (_, violations) = validate_json(&serialized).unwrap();
        assert!(violations.is_empty(), "{violations:?}");
    }

    #[test]
    fn validator_accepts_parsed_dataset_and_flags_tampering() {
        let json = br#"{
            "images":[{"id":1,"width":6,"height":5,"file_name":"a.png"}],
            "annotations":[{"id":1,"image_id":1,"category_id":7,
                "segmentation":[[1.0,1.0, 4.0,1.0, 4.0,4.0, 1.0,4.0]]}],
            "categories":[{"id":7,"name":"square"}]
        }"#;
        let mut d = parse_dataset(json).unwrap();
        assert!(validate_dataset(&d).is_ok());
        d.annotations[0].area += 1;
        assert!(validate_dataset(&d).is_err());
    }
}
