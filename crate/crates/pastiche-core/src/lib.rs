//! Copy-paste dataset synthesis for instance segmentation.
//!
//! The pipeline sits downstream of external instance producers (image
//! generators, web crawlers, segmenters and scorers, all out of process):
//! it ingests their pool manifest, selects the best candidate mask per
//! instance by score, filters the pool by mask area, category-specific
//! score thresholds and background simplicity, learns per-category object
//! scales from an annotated dataset, and composes new training images by
//! pasting instances onto backgrounds with occlusion-correct annotation
//! updates, emitting COCO-style JSON plus PNGs.
//!
//! Stages communicate through files (manifests, datasets, stats sidecars),
//! so each can run separately; see the `pastiche` binary for the CLI.

pub mod coco;
pub mod compose;
pub mod config;
pub mod error;
pub mod mask;
pub mod pipeline;
pub mod pool;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
