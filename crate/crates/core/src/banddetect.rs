//! Per-color band detection.
//!
//! One color function runs: HSV mask, colored-area / colored-ratio gate on
//! the raw mask, blur + binarize, connected regions, width/height filter and
//! finally vertical grouping of the surviving rectangles into bands.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colorspace::Hsv8;
use crate::error::{Error, Result};
use crate::raster::{self, GaussianKernel, RasterImage};
use crate::segmentation::{self, BoundingRect, Connectivity, HsvRange};

/// Full parameter set of one color function (one row of the color table).
///
/// Rows that share a `name` form one color (e.g. the high- and low-hue red
/// rows); they must share a digit and are merged after detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    pub digit: u8,
    /// Legend color as `#rrggbb`, used only for display.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swatch: Option<String>,
    /// One or two HSV boxes; a pixel matching any of them is on.
    pub ranges: Vec<HsvRange>,
    /// Minimum number of on pixels (colored area).
    pub ca: u64,
    /// Minimum fraction of on pixels over all pixels (colored ratio).
    pub cr: f64,
    /// Minimum width/height ratio of a region.
    pub whr: f64,
    /// Largest vertical distance between region centers merged into one band.
    pub mvd: f64,
}

impl ColorSpec {
    /// `name` plus the variant, e.g. `red (high-hue)`.
    pub fn label(&self) -> String {
        match &self.variant {
            Some(v) => format!("{} ({v})", self.name),
            None => self.name.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let label = self.label();
        if self.name.trim().is_empty() {
            return Err(Error::Config("color spec with empty name".into()));
        }
        if self.digit > 7 {
            return Err(Error::Config(format!(
                "{label}: digit {} outside 0-7",
                self.digit
            )));
        }
        if self.ranges.is_empty() || self.ranges.len() > 2 {
            return Err(Error::Config(format!(
                "{label}: expected 1 or 2 HSV ranges, got {}",
                self.ranges.len()
            )));
        }
        for r in &self.ranges {
            r.validate().map_err(|e| Error::Config(format!("{label}: {e}")))?;
        }
        if !(0.0..=1.0).contains(&self.cr) {
            return Err(Error::Config(format!("{label}: cr {} outside [0, 1]", self.cr)));
        }
        if !(self.whr >= 0.0 && self.whr.is_finite()) {
            return Err(Error::Config(format!("{label}: whr {} must be >= 0", self.whr)));
        }
        if !(self.mvd >= 0.0 && self.mvd.is_finite()) {
            return Err(Error::Config(format!("{label}: mvd {} must be >= 0", self.mvd)));
        }
        Ok(())
    }

    pub fn hsv_volume(&self) -> u64 {
        self.ranges.iter().map(HsvRange::volume).sum()
    }

    fn gate_passes(&self, count: usize, total: usize) -> bool {
        count as u64 >= self.ca && (count as f64 / total as f64) >= self.cr
    }
}

/// One detected band of a color.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandDetection {
    pub color_name: String,
    pub digit: u8,
    /// Mean of the member rects' vertical centers.
    pub y_center: f64,
    pub member_rects: Vec<BoundingRect>,
}

impl BandDetection {
    /// Union of the member rects.
    pub fn bounds(&self) -> BoundingRect {
        let mut it = self.member_rects.iter();
        let first = *it.next().expect("band without member rects");
        it.fold(first, |acc, r| BoundingRect {
            x_min: acc.x_min.min(r.x_min),
            x_max: acc.x_max.max(r.x_max),
            y_min: acc.y_min.min(r.y_min),
            y_max: acc.y_max.max(r.y_max),
            pixel_count: acc.pixel_count + r.pixel_count,
        })
    }

    pub fn x_min(&self) -> usize {
        self.member_rects.iter().map(|r| r.x_min).min().unwrap_or(0)
    }
}

/// Rects that fell into the same band, with their mean vertical center.
#[derive(Debug, Clone, PartialEq)]
pub struct RectGroup {
    pub y_center: f64,
    pub members: Vec<BoundingRect>,
}

/// Sorts rects by vertical center and starts a new group wherever the gap to
/// the previous center is not strictly below `mvd`.
pub fn group_by_mvd(rects: &[BoundingRect], mvd: f64) -> Vec<RectGroup> {
    let mut sorted = rects.to_vec();
    sorted.sort_by(|a, b| a.y_center().total_cmp(&b.y_center()).then_with(|| a.cmp(b)));

    let mut groups: Vec<Vec<BoundingRect>> = Vec::new();
    let mut prev: Option<f64> = None;
    for r in sorted {
        let y = r.y_center();
        match (prev, groups.last_mut()) {
            (Some(p), Some(g)) if y - p < mvd => g.push(r),
            _ => groups.push(vec![r]),
        }
        prev = Some(y);
    }
    groups
        .into_iter()
        .map(|members| RectGroup {
            y_center: members.iter().map(BoundingRect::y_center).sum::<f64>() / members.len() as f64,
            members,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectParams {
    pub blur_size: usize,
    pub blur_sigma: f64,
    #[serde(default)]
    pub connectivity: Connectivity,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            blur_size: 5,
            blur_sigma: 1.1,
            connectivity: Connectivity::Eight,
        }
    }
}

/// Raw mask statistics and the regions found after blur + binarize, before
/// any spec-dependent gating or filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskRegions {
    pub mask_count: usize,
    pub total: usize,
    pub rects: Vec<BoundingRect>,
}

impl MaskRegions {
    /// Rects that survive the spec's gate and width/height filter.
    pub fn accepted(&self, spec: &ColorSpec) -> Vec<BoundingRect> {
        if !spec.gate_passes(self.mask_count, self.total) {
            return Vec::new();
        }
        segmentation::filter_by_whr(&self.rects, spec.whr)
    }
}

/// Output of one color function, with the mask count that fed its gate.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorDetection {
    pub mask_count: usize,
    pub bands: Vec<BandDetection>,
}

/// Mask count of one spec row, reported so callers can flag borderline gates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskCount {
    pub color: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    pub count: usize,
    pub ca: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllDetections {
    pub bands: Vec<BandDetection>,
    pub mask_counts: Vec<MaskCount>,
}

/// Blur kernel plus labeling options shared by every color function.
#[derive(Debug, Clone)]
pub struct Detector {
    kernel: GaussianKernel,
    connectivity: Connectivity,
}

impl Default for Detector {
    fn default() -> Self {
        Self::new(&DetectParams::default()).expect("default detect params are valid")
    }
}

impl Detector {
    pub fn new(params: &DetectParams) -> Result<Self> {
        Ok(Self {
            kernel: raster::make_gaussian_kernel(params.blur_size, params.blur_sigma)?,
            connectivity: params.connectivity,
        })
    }

    pub fn kernel(&self) -> &GaussianKernel {
        &self.kernel
    }

    /// Mask, blur, binarize and label, independent of the spec's gates.
    pub fn regions(&self, hsv: &RasterImage<Hsv8>, ranges: &[HsvRange]) -> Result<MaskRegions> {
        let mask = segmentation::hsv_mask(hsv, ranges)?;
        let mask_count = mask.pixels().iter().filter(|&&b| b).count();
        let rects = if mask_count == 0 {
            Vec::new()
        } else {
            self.label(&mask)
        };
        Ok(MaskRegions {
            mask_count,
            total: hsv.len(),
            rects,
        })
    }

    fn label(&self, mask: &raster::BitImage) -> Vec<BoundingRect> {
        let gray = mask.map(|&b| if b { 255u8 } else { 0 });
        let blurred = raster::gaussian_blur(&gray, &self.kernel);
        segmentation::connected_components_with(&raster::binarize(&blurred), self.connectivity)
    }

    pub fn detect_color(&self, hsv: &RasterImage<Hsv8>, spec: &ColorSpec) -> Result<ColorDetection> {
        let mask = segmentation::hsv_mask(hsv, &spec.ranges)?;
        let mask_count = mask.pixels().iter().filter(|&&b| b).count();
        if !spec.gate_passes(mask_count, hsv.len()) {
            return Ok(ColorDetection {
                mask_count,
                bands: Vec::new(),
            });
        }
        let rects = segmentation::filter_by_whr(&self.label(&mask), spec.whr);
        Ok(ColorDetection {
            mask_count,
            bands: to_bands(&spec.name, spec.digit, group_by_mvd(&rects, spec.mvd)),
        })
    }

    /// Runs every color function and merges rows that share a color name.
    pub fn detect_all(&self, hsv: &RasterImage<Hsv8>, specs: &[ColorSpec]) -> Result<AllDetections> {
        let groups = group_specs(specs)?;
        let per_group: Vec<(Vec<BandDetection>, Vec<MaskCount>)> = groups
            .par_iter()
            .map(|rows| -> Result<_> {
                let regions = rows
                    .iter()
                    .map(|spec| self.regions(hsv, &spec.ranges))
                    .collect::<Result<Vec<_>>>()?;
                let counts = rows
                    .iter()
                    .zip(&regions)
                    .map(|(spec, reg)| MaskCount {
                        color: spec.name.clone(),
                        variant: spec.variant.clone(),
                        count: reg.mask_count,
                        ca: spec.ca,
                    })
                    .collect();
                Ok((merge_rows(rows, &regions), counts))
            })
            .collect::<Result<_>>()?;

        let mut bands = Vec::new();
        let mut mask_counts = Vec::new();
        for (b, c) in per_group {
            bands.extend(b);
            mask_counts.extend(c);
        }
        sort_bands(&mut bands);
        Ok(AllDetections { bands, mask_counts })
    }
}

/// Bands of one color from the per-row regions of all its rows. Each row is
/// gated and filtered with its own parameters; the surviving rects are then
/// grouped together using the largest MVD among the rows.
pub fn merge_rows(rows: &[&ColorSpec], regions: &[MaskRegions]) -> Vec<BandDetection> {
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    let rects: Vec<BoundingRect> = rows
        .iter()
        .zip(regions)
        .flat_map(|(spec, reg)| reg.accepted(spec))
        .collect();
    let mvd = rows.iter().map(|s| s.mvd).fold(0.0, f64::max);
    to_bands(&first.name, first.digit, group_by_mvd(&rects, mvd))
}

fn to_bands(name: &str, digit: u8, groups: Vec<RectGroup>) -> Vec<BandDetection> {
    groups
        .into_iter()
        .map(|g| BandDetection {
            color_name: name.to_string(),
            digit,
            y_center: g.y_center,
            member_rects: g.members,
        })
        .collect()
}

/// Top to bottom; equal heights fall back to the leftmost edge, then digit.
pub fn sort_bands(bands: &mut [BandDetection]) {
    bands.sort_by(|a, b| {
        a.y_center
            .total_cmp(&b.y_center)
            .then_with(|| a.x_min().cmp(&b.x_min()))
            .then_with(|| a.digit.cmp(&b.digit))
    });
}

/// Validates a spec list and groups rows by color name, in order of first
/// appearance.
pub fn group_specs(specs: &[ColorSpec]) -> Result<Vec<Vec<&ColorSpec>>> {
    if specs.is_empty() {
        return Err(Error::Config("no color specs configured".into()));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut by_name: BTreeMap<&str, Vec<&ColorSpec>> = BTreeMap::new();
    let mut digit_owner: BTreeMap<u8, &str> = BTreeMap::new();
    for spec in specs {
        spec.validate()?;
        if let Some(owner) = digit_owner.insert(spec.digit, &spec.name) {
            if owner != spec.name {
                return Err(Error::Config(format!(
                    "digit {} is assigned to both `{owner}` and `{}`",
                    spec.digit, spec.name
                )));
            }
        }
        let rows = by_name.entry(&spec.name).or_default();
        if rows.is_empty() {
            order.push(&spec.name);
        } else if rows[0].digit != spec.digit {
            return Err(Error::Config(format!(
                "rows of `{}` disagree on the digit",
                spec.name
            )));
        }
        rows.push(spec);
    }
    Ok(order
        .into_iter()
        .map(|name| by_name.remove(name).unwrap_or_default())
        .collect())
}

/// Bands of a single spec using the default blur and connectivity.
pub fn detect_color(hsv: &RasterImage<Hsv8>, spec: &ColorSpec) -> Result<Vec<BandDetection>> {
    Ok(Detector::default().detect_color(hsv, spec)?.bands)
}

pub fn detect_all(hsv: &RasterImage<Hsv8>, specs: &[ColorSpec]) -> Result<Vec<BandDetection>> {
    Ok(Detector::default().detect_all(hsv, specs)?.bands)
}
