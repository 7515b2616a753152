//! Reads spray-painted color-band codes off granite slab photos.
//!
//! The pipeline downsizes the photo, optionally crops it to the painted
//! area, converts to HSV and runs one detection function per paint color.
//! Each function thresholds the image, gates on the amount of color found,
//! blurs and labels the mask, drops regions that are taller than wide and
//! merges fragments of the same stripe. The surviving bands are ordered
//! according to which edge of the slab they are anchored to and mapped to
//! digits.
//!
//! Besides decoding, the crate contains the per-color grid-search trainer,
//! evaluation reports and a deterministic synthetic fixture generator.

pub mod banddetect;
pub mod colorspace;
pub mod config;
pub mod decoder;
pub mod error;
pub mod imageio;
pub mod raster;
pub mod segmentation;
pub mod synthgen;
pub mod trainer;

pub use banddetect::{BandDetection, ColorSpec, DetectParams, Detector};
pub use colorspace::{Hsv8, Rgb8};
pub use config::AppConfig;
pub use decoder::{decode_image, AnchorPolicy, DecodeReport, DecodeResult, DigitKey, Direction, Pipeline};
pub use error::{Error, Result};
pub use raster::{CropRect, RasterImage};
pub use segmentation::{BoundingRect, HsvRange};
