//! Machine-readable decode output shared by the CLI and the service.
//!
//! Field order is fixed by declaration order and bands are listed in reading
//! order, so identical inputs serialize to identical bytes.

use std::path::Path;

use serde::Serialize;
use slabcode_core::decoder::{ImageRect, PipelineFrame};
use slabcode_core::{BandDetection, DecodeResult};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandRecord {
    pub color: String,
    pub digit: u8,
    /// Band center row in original image pixels.
    pub y: f64,
    /// Union of the band's regions in original image pixels.
    pub rect: ImageRect,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub members: Option<Vec<ImageRect>>,
}

impl BandRecord {
    pub fn new(band: &BandDetection, frame: &PipelineFrame, with_members: bool) -> Self {
        Self {
            color: band.color_name.clone(),
            digit: band.digit,
            y: round2(frame.y_to_original(band.y_center)),
            rect: frame.to_original(&band.bounds()),
            members: with_members.then(|| band.member_rects.iter().map(|r| frame.to_original(r)).collect()),
        }
    }
}

/// One line of `decode --json-out`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodeRecord {
    pub path: String,
    pub code: Option<String>,
    pub direction: Option<String>,
    pub bands: Vec<BandRecord>,
    pub warnings: Vec<String>,
}

impl DecodeRecord {
    pub fn decoded(path: &Path, result: &DecodeResult) -> Self {
        let frame = result.frame.expect("pipeline results carry their frame");
        Self {
            path: display_path(path),
            code: Some(result.code.clone()),
            direction: Some(result.direction.as_str().to_string()),
            bands: result
                .bands
                .iter()
                .map(|b| BandRecord::new(b, &frame, false))
                .collect(),
            warnings: result.warnings.clone(),
        }
    }

    pub fn empty(path: &Path, warnings: Vec<String>) -> Self {
        Self {
            path: display_path(path),
            code: None,
            direction: None,
            bands: Vec::new(),
            warnings,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes") + "\n"
    }
}

fn display_path(path: &Path) -> String {
    path.to_string_lossy().replace('\\', "/")
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use slabcode_core::segmentation::BoundingRect;
    use slabcode_core::{CropRect, Direction};

    fn frame() -> PipelineFrame {
        PipelineFrame {
            original_width: 200,
            original_height: 200,
            scaled_width: 20,
            scaled_height: 20,
            crop: CropRect::new(2, 4, 10, 10),
        }
    }

    #[test]
    fn band_is_mapped_to_original_pixels() {
        let band = BandDetection {
            color_name: "red".into(),
            digit: 2,
            y_center: 1.0,
            member_rects: vec![BoundingRect {
                x_min: 0,
                x_max: 3,
                y_min: 0,
                y_max: 2,
                pixel_count: 12,
            }],
        };
        let rec = BandRecord::new(&band, &frame(), true);
        assert_eq!(
            rec.rect,
            ImageRect {
                x: 20,
                y: 40,
                w: 40,
                h: 30
            }
        );
        // Row 1 of the crop is row 5 of the scaled image, whose center is
        // at 5.5 * 10 in original pixels.
        assert_eq!(rec.y, 54.5);
        assert_eq!(rec.members.as_ref().unwrap().len(), 1);
    }

    #[test]
    fn json_field_order_is_fixed() {
        let result = DecodeResult {
            code: "2".into(),
            direction: Direction::Downward,
            bands: vec![BandDetection {
                color_name: "red".into(),
                digit: 2,
                y_center: 1.0,
                member_rects: vec![BoundingRect {
                    x_min: 0,
                    x_max: 3,
                    y_min: 0,
                    y_max: 2,
                    pixel_count: 12,
                }],
            }],
            warnings: vec![],
            mask_counts: vec![],
            frame: Some(frame()),
        };
        let line = DecodeRecord::decoded(Path::new("a.png"), &result).to_json_line();
        assert_eq!(
            line,
            "{\"path\":\"a.png\",\"code\":\"2\",\"direction\":\"down\",\"bands\":[{\"color\":\"red\",\"digit\":2,\
             \"y\":54.5,\"rect\":{\"x\":20,\"y\":40,\"w\":40,\"h\":30}}],\"warnings\":[]}\n"
        );
    }
}
