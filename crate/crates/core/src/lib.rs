//! Fully automatic skin-lesion segmentation for dermoscopy images.
//!
//! The pipeline over-segments the image into SLIC superpixels, merges them
//! on a region adjacency graph with a bisection-searched mean-color
//! threshold until two regions remain, then selects the lesion region
//! against an Otsu reference segmentation and smooths it with hole filling
//! and a disk dilation.
//!
//! ```no_run
//! use lesionseg::{imagecore, pipeline::{segment_image, PipelineConfig}};
//!
//! let img = imagecore::load_image("lesion.png")?;
//! let result = segment_image(&img, &PipelineConfig::default())?;
//! imagecore::save_mask_png(&result.mask, "lesion_mask.png")?;
//! # Ok::<(), lesionseg::Error>(())
//! ```
//!
//! Each stage is usable on its own; see the crate's `examples/` directory.

pub mod dataset;
pub mod error;
pub mod imagecore;
pub mod metrics;
pub mod pipeline;
pub mod postprocess;
pub mod rag;
pub mod report;
pub mod slic;
pub mod synthetic;

pub use error::{Error, Result};
pub use imagecore::{BinaryMask, GrayImage, ImageRgb, LabelMap};
