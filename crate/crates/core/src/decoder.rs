//! Turning detected bands into the numeric code, and the end-to-end
//! image decode.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::banddetect::{self, BandDetection, ColorSpec, Detector, MaskCount};
use crate::colorspace::{self, Hsv8, Rgb8};
use crate::config::AppConfig;
use crate::error::{Error, Result};
use crate::raster::{self, CropRect, RasterImage};
use crate::segmentation::BoundingRect;

/// Bijection between color names and code digits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigitKey {
    mapping: BTreeMap<String, u8>,
}

impl DigitKey {
    pub const STANDARD: [(&'static str, u8); 8] = [
        ("black", 0),
        ("brown", 1),
        ("red", 2),
        ("orange", 3),
        ("yellow", 4),
        ("green", 5),
        ("blue", 6),
        ("purple", 7),
    ];

    pub fn standard() -> Self {
        Self {
            mapping: Self::STANDARD.iter().map(|&(n, d)| (n.to_string(), d)).collect(),
        }
    }

    /// Key implied by a (validated) spec list.
    pub fn from_specs(specs: &[ColorSpec]) -> Result<Self> {
        let groups = banddetect::group_specs(specs)?;
        Ok(Self {
            mapping: groups.iter().map(|g| (g[0].name.clone(), g[0].digit)).collect(),
        })
    }

    pub fn digit(&self, color: &str) -> Option<u8> {
        self.mapping.get(color).copied()
    }

    pub fn color(&self, digit: u8) -> Option<&str> {
        self.mapping
            .iter()
            .find(|(_, &d)| d == digit)
            .map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Bands anchored at the top, read top to bottom.
    #[serde(rename = "down")]
    Downward,
    /// Bands anchored at the bottom, read bottom to top.
    #[serde(rename = "up")]
    Upward,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Downward => "down",
            Direction::Upward => "up",
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the reading direction is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorPolicy {
    /// Infer from where the bands sit in the image.
    #[default]
    Auto,
    Top,
    Bottom,
}

impl std::str::FromStr for AnchorPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "" | "auto" => Ok(AnchorPolicy::Auto),
            "top" => Ok(AnchorPolicy::Top),
            "bottom" => Ok(AnchorPolicy::Bottom),
            other => Err(Error::Parameter(format!(
                "anchor `{other}` must be auto, top or bottom"
            ))),
        }
    }
}

impl std::fmt::Display for AnchorPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AnchorPolicy::Auto => "auto",
            AnchorPolicy::Top => "top",
            AnchorPolicy::Bottom => "bottom",
        })
    }
}

/// Where the detection image sits inside the original photo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineFrame {
    pub original_width: usize,
    pub original_height: usize,
    pub scaled_width: usize,
    pub scaled_height: usize,
    /// Crop applied to the scaled image.
    pub crop: CropRect,
}

/// Axis-aligned rectangle `(x, y, w, h)` in original image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl PipelineFrame {
    /// Maps an original-image crop onto the scaled image, covering every
    /// scaled pixel the crop touches.
    pub fn scaled_crop(original: (usize, usize), scaled: (usize, usize), crop: CropRect) -> Result<CropRect> {
        crop.validate(original.0, original.1)?;
        let x0 = (crop.x * scaled.0 / original.0).min(scaled.0 - 1);
        let y0 = (crop.y * scaled.1 / original.1).min(scaled.1 - 1);
        let x1 = ((crop.x + crop.w) * scaled.0)
            .div_ceil(original.0)
            .clamp(x0 + 1, scaled.0);
        let y1 = ((crop.y + crop.h) * scaled.1)
            .div_ceil(original.1)
            .clamp(y0 + 1, scaled.1);
        Ok(CropRect::new(x0, y0, x1 - x0, y1 - y0))
    }

    /// Detection-space row coordinate (pixel centers) to original pixels.
    pub fn y_to_original(&self, y: f64) -> f64 {
        let scale = self.original_height as f64 / self.scaled_height as f64;
        (y + self.crop.y as f64 + 0.5) * scale - 0.5
    }

    /// Detection-space rect (inclusive bounds) to original image pixels.
    pub fn to_original(&self, r: &BoundingRect) -> ImageRect {
        let (ow, oh) = (self.original_width, self.original_height);
        let (sw, sh) = (self.scaled_width, self.scaled_height);
        let x1 = ((r.x_max + self.crop.x + 1) * ow).div_ceil(sw).min(ow);
        let y1 = ((r.y_max + self.crop.y + 1) * oh).div_ceil(sh).min(oh);
        let x0 = ((r.x_min + self.crop.x) * ow / sw).min(x1.saturating_sub(1));
        let y0 = ((r.y_min + self.crop.y) * oh / sh).min(y1.saturating_sub(1));
        ImageRect {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        }
    }
}

/// Evidence gathered during a decode; also carried by the no-bands error.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DecodeReport {
    pub mask_counts: Vec<MaskCount>,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<PipelineFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub code: String,
    pub direction: Direction,
    /// Bands in reading order.
    pub bands: Vec<BandDetection>,
    pub warnings: Vec<String>,
    pub mask_counts: Vec<MaskCount>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<PipelineFrame>,
}

/// Mean band position above the midline reads downward; on or below it
/// reads upward.
pub fn reading_direction(bands: &[BandDetection], image_height: usize) -> Result<Direction> {
    if bands.is_empty() {
        return Err(Error::NoBands(Box::default()));
    }
    let mean = bands.iter().map(|b| b.y_center).sum::<f64>() / bands.len() as f64;
    Ok(if mean < image_height as f64 / 2.0 {
        Direction::Downward
    } else {
        Direction::Upward
    })
}

/// Orders bands for `direction` and spells out their digits. The upward
/// order is exactly the reverse of the downward one.
pub fn decode(bands: &[BandDetection], direction: Direction, key: &DigitKey) -> Result<DecodeResult> {
    if bands.is_empty() {
        return Err(Error::NoBands(Box::default()));
    }
    let mut ordered = bands.to_vec();
    for band in &mut ordered {
        band.digit = key.digit(&band.color_name).ok_or_else(|| {
            Error::Config(format!(
                "color `{}` is missing from the digit key",
                band.color_name
            ))
        })?;
    }
    banddetect::sort_bands(&mut ordered);
    if direction == Direction::Upward {
        ordered.reverse();
    }

    let mut warnings = Vec::new();
    for pair in ordered.windows(2) {
        if pair[0].digit == pair[1].digit && pair[0].y_center == pair[1].y_center {
            warnings.push(format!(
                "duplicate {} band at y={}",
                pair[0].color_name, pair[0].y_center
            ));
        }
    }

    let code = ordered.iter().map(|b| char::from(b'0' + b.digit)).collect();
    Ok(DecodeResult {
        code,
        direction,
        bands: ordered,
        warnings,
        mask_counts: Vec::new(),
        frame: None,
    })
}

/// Flags colors whose raw mask count sits within 10% of the colored-area gate.
pub fn gate_warnings(counts: &[MaskCount]) -> Vec<String> {
    counts
        .iter()
        .filter(|c| {
            let ca = c.ca as f64;
            c.ca > 0 && (c.count as f64 - ca).abs() <= 0.1 * ca
        })
        .map(|c| {
            let label = match &c.variant {
                Some(v) => format!("{} ({v})", c.color),
                None => c.color.clone(),
            };
            format!(
                "low confidence: {label} mask count {} is within 10% of its CA gate {}",
                c.count, c.ca
            )
        })
        .collect()
}

/// Scaled, cropped HSV image ready for detection.
#[derive(Debug, Clone)]
pub struct PreparedImage {
    pub hsv: RasterImage<Hsv8>,
    pub frame: PipelineFrame,
}

/// Configured decode pipeline: scale, crop, HSV, detect, order.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: AppConfig,
    detector: Detector,
    key: DigitKey,
}

impl Pipeline {
    pub fn new(config: AppConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            detector: Detector::new(&config.detect)?,
            key: DigitKey::from_specs(&config.colors)?,
            config,
        })
    }

    pub fn config(&self) -> &AppConfig {
        &self.config
    }

    pub fn detector(&self) -> &Detector {
        &self.detector
    }

    pub fn key(&self) -> &DigitKey {
        &self.key
    }

    /// `crop` is given in original image pixels.
    pub fn prepare(&self, rgb: &RasterImage<Rgb8>, crop: Option<CropRect>) -> Result<PreparedImage> {
        if let Some(c) = crop {
            c.validate(rgb.width(), rgb.height())?;
        }
        let scaled = raster::scale_down(rgb, self.config.scale_factor)?;
        let dims = (scaled.width(), scaled.height());
        let scaled_crop = match crop {
            Some(c) => PipelineFrame::scaled_crop((rgb.width(), rgb.height()), dims, c)?,
            None => scaled.full_rect(),
        };
        let work = raster::crop(&scaled, scaled_crop)?;
        Ok(PreparedImage {
            hsv: colorspace::convert_image_to_hsv(&work)?,
            frame: PipelineFrame {
                original_width: rgb.width(),
                original_height: rgb.height(),
                scaled_width: dims.0,
                scaled_height: dims.1,
                crop: scaled_crop,
            },
        })
    }

    pub fn decode_prepared(&self, prepared: &PreparedImage, anchor: AnchorPolicy) -> Result<DecodeResult> {
        self.decode_with_specs(prepared, anchor, &self.config.colors)
    }

    /// Like [`Pipeline::decode_prepared`] with a different spec list (used
    /// while training).
    pub fn decode_with_specs(
        &self,
        prepared: &PreparedImage,
        anchor: AnchorPolicy,
        specs: &[ColorSpec],
    ) -> Result<DecodeResult> {
        let found = self.detector.detect_all(&prepared.hsv, specs)?;
        let mut warnings = gate_warnings(&found.mask_counts);
        if found.bands.is_empty() {
            return Err(Error::NoBands(Box::new(DecodeReport {
                mask_counts: found.mask_counts,
                warnings,
                frame: Some(prepared.frame),
            })));
        }
        let direction = match anchor {
            AnchorPolicy::Auto => reading_direction(&found.bands, prepared.hsv.height())?,
            AnchorPolicy::Top => Direction::Downward,
            AnchorPolicy::Bottom => Direction::Upward,
        };
        let key = if std::ptr::eq(specs, self.config.colors.as_slice()) {
            self.key.clone()
        } else {
            DigitKey::from_specs(specs)?
        };
        let mut result = decode(&found.bands, direction, &key)?;
        warnings.append(&mut result.warnings);
        result.warnings = warnings;
        result.mask_counts = found.mask_counts;
        result.frame = Some(prepared.frame);
        Ok(result)
    }

    pub fn decode_image(
        &self,
        rgb: &RasterImage<Rgb8>,
        crop: Option<CropRect>,
        anchor: AnchorPolicy,
    ) -> Result<DecodeResult> {
        self.decode_prepared(&self.prepare(rgb, crop)?, anchor)
    }
}

/// End-to-end decode with the config's own anchor policy.
pub fn decode_image(
    rgb: &RasterImage<Rgb8>,
    crop: Option<CropRect>,
    config: &AppConfig,
) -> Result<DecodeResult> {
    let pipeline = Pipeline::new(config.clone())?;
    pipeline.decode_image(rgb, crop, config.anchor)
}
