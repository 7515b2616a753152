//! Per-color and combined success metrics.
//!
//! A color succeeds on an image when it produces exactly as many bands as
//! the ground-truth code has occurrences of its digit. Images that do not
//! contain the color are not counted toward its rate, but every band found
//! on them is tallied as a false positive. Both per-image and per-band
//! countings are reported.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banddetect::{self, ColorSpec, Detector, MaskRegions};
use crate::decoder::{AnchorPolicy, Direction, Pipeline, PreparedImage};
use crate::error::{Error, Result};
use crate::imageio;
use crate::trainer::manifest::{DatasetManifest, Split};

/// A labeled image already scaled, cropped and converted to HSV.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    /// Path as listed in the manifest.
    pub path: PathBuf,
    pub code: String,
    pub anchor: AnchorPolicy,
    pub image: PreparedImage,
    /// Occurrences of each digit in `code`.
    pub digit_counts: [usize; 8],
}

impl PreparedSample {
    pub fn new(path: PathBuf, code: String, anchor: AnchorPolicy, image: PreparedImage) -> Result<Self> {
        crate::trainer::manifest::validate_code(&code)?;
        let mut digit_counts = [0usize; 8];
        for b in code.bytes() {
            digit_counts[usize::from(b - b'0')] += 1;
        }
        Ok(Self {
            path,
            code,
            anchor,
            image,
            digit_counts,
        })
    }

    pub fn expects(&self, digit: u8) -> usize {
        self.digit_counts.get(usize::from(digit)).copied().unwrap_or(0)
    }
}

/// Loads and prepares every image of `split`, keeping manifest order.
pub fn prepare_split(
    pipeline: &Pipeline,
    manifest: &DatasetManifest,
    split: Split,
) -> Result<Vec<PreparedSample>> {
    manifest
        .split(split)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|entry| {
            let rgb = imageio::load_image(&manifest.resolve(entry))?;
            let image = pipeline.prepare(&rgb, entry.crop)?;
            PreparedSample::new(entry.path.clone(), entry.code.clone(), entry.anchor, image)
        })
        .collect()
}

/// Tallies of one color over a set of images.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColorScore {
    /// Images whose code contains the color.
    pub images: usize,
    pub image_successes: usize,
    pub bands_expected: usize,
    /// Per image, the smaller of found and expected band counts, summed.
    pub bands_matched: usize,
    /// Images whose code lacks the color.
    pub negative_images: usize,
    /// Bands found on those images.
    pub false_positive_bands: usize,
}

impl ColorScore {
    pub fn image_rate(&self) -> Option<f64> {
        (self.images > 0).then(|| self.image_successes as f64 / self.images as f64)
    }

    pub fn band_rate(&self) -> Option<f64> {
        (self.bands_expected > 0).then(|| self.bands_matched as f64 / self.bands_expected as f64)
    }

    pub fn record(&mut self, expected: usize, found: usize) {
        if expected == 0 {
            self.negative_images += 1;
            self.false_positive_bands += found;
        } else {
            self.images += 1;
            self.bands_expected += expected;
            self.bands_matched += found.min(expected);
            if found == expected {
                self.image_successes += 1;
            }
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.images += other.images;
        self.image_successes += other.image_successes;
        self.bands_expected += other.bands_expected;
        self.bands_matched += other.bands_matched;
        self.negative_images += other.negative_images;
        self.false_positive_bands += other.false_positive_bands;
        self
    }
}

/// Number of bands the rows of one color produce from their regions.
/// Agrees with [`banddetect::merge_rows`].
pub fn band_count(rows: &[&ColorSpec], regions: &[&MaskRegions]) -> usize {
    let rects: Vec<_> = rows
        .iter()
        .zip(regions)
        .flat_map(|(spec, reg)| reg.accepted(spec))
        .collect();
    if rects.is_empty() {
        return 0;
    }
    let mvd = rows.iter().map(|s| s.mvd).fold(0.0, f64::max);
    banddetect::group_by_mvd(&rects, mvd).len()
}

/// Regions of every row of a color on every sample, indexed `[row][sample]`.
pub fn row_regions(
    detector: &Detector,
    rows: &[&ColorSpec],
    samples: &[PreparedSample],
) -> Result<Vec<Vec<MaskRegions>>> {
    rows.iter()
        .map(|spec| {
            samples
                .par_iter()
                .map(|s| detector.regions(&s.image.hsv, &spec.ranges))
                .collect()
        })
        .collect()
}

/// Scores one color (all rows sharing a name) from precomputed regions.
pub fn score_regions(
    rows: &[&ColorSpec],
    regions: &[&[MaskRegions]],
    samples: &[PreparedSample],
) -> ColorScore {
    let digit = rows[0].digit;
    samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let per_row: Vec<&MaskRegions> = regions.iter().map(|r| &r[i]).collect();
            let mut score = ColorScore::default();
            score.record(s.expects(digit), band_count(rows, &per_row));
            score
        })
        .reduce(ColorScore::default, ColorScore::merge)
}

fn empty_split(rows: &[&ColorSpec]) -> Error {
    Error::EmptySplit {
        split: "selected".into(),
        detail: format!(
            " for color `{}` (no code contains digit {})",
            rows[0].name, rows[0].digit
        ),
    }
}

/// Success tallies of one color; `rows` are the spec rows sharing its name.
pub fn evaluate_color(
    detector: &Detector,
    rows: &[&ColorSpec],
    samples: &[PreparedSample],
) -> Result<ColorScore> {
    if rows.is_empty() {
        return Err(Error::Parameter("no spec rows given".into()));
    }
    if samples.iter().all(|s| s.expects(rows[0].digit) == 0) {
        return Err(empty_split(rows));
    }
    let regions = row_regions(detector, rows, samples)?;
    let refs: Vec<&[MaskRegions]> = regions.iter().map(Vec::as_slice).collect();
    Ok(score_regions(rows, &refs, samples))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorReport {
    pub color: String,
    pub digit: u8,
    #[serde(flatten)]
    pub score: ColorScore,
    pub image_rate: Option<f64>,
    pub band_rate: Option<f64>,
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub path: String,
    pub expected: String,
    /// `None` when no bands were detected.
    pub produced: Option<String>,
    pub direction: Option<Direction>,
    pub hit: bool,
    /// Colors whose band count differed from the code's digit multiplicity.
    pub color_mismatches: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedReport {
    pub images: usize,
    pub hits: usize,
    pub exact_match_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub colors: Vec<ColorReport>,
    pub combined: CombinedReport,
    pub images: Vec<ImageReport>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Human-readable tables: per-color rates, then per-image codes.
    pub fn to_table(&self) -> String {
        use std::fmt::Write;
        let pct = |r: Option<f64>| r.map_or_else(|| "-".to_string(), |r| format!("{:.2}%", r * 100.0));
        let mut out = String::new();
        let _ = writeln!(out, "Per-color results ({} split)", self.split);
        let _ = writeln!(
            out,
            "{:<10} {:>5} {:>7} {:>8} {:>9} {:>6} {:>9} {:>9} {:>9}",
            "color", "digit", "images", "success", "img-rate", "bands", "matched", "band-rate", "fp-bands"
        );
        for c in &self.colors {
            let _ = writeln!(
                out,
                "{:<10} {:>5} {:>7} {:>8} {:>9} {:>6} {:>9} {:>9} {:>9}  ({} ms)",
                c.color,
                c.digit,
                c.score.images,
                c.score.image_successes,
                pct(c.image_rate),
                c.score.bands_expected,
                c.score.bands_matched,
                pct(c.band_rate),
                c.score.false_positive_bands,
                c.wall_time.as_millis()
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "Combined results ({} split)", self.split);
        let _ = writeln!(
            out,
            "{:<28} {:>10} {:>10} {:>6}",
            "image", "expected", "produced", "match"
        );
        for img in &self.images {
            let _ = writeln!(
                out,
                "{:<28} {:>10} {:>10} {:>6}",
                img.path,
                img.expected,
                img.produced.as_deref().unwrap_or("-"),
                if img.hit { "yes" } else { "NO" }
            );
        }
        let _ = writeln!(
            out,
            "exact match: {}/{} = {:.2}%",
            self.combined.hits,
            self.combined.images,
            self.combined.exact_match_rate * 100.0
        );
        out
    }
}

/// Decodes every sample with `specs` and compares whole code strings, plus
/// per-color multiplicity tallies. Manifest anchors override the config's
/// policy unless they are `auto`.
pub fn evaluate_full(
    pipeline: &Pipeline,
    specs: &[ColorSpec],
    samples: &[PreparedSample],
    split: Split,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::EmptySplit {
            split: split.to_string(),
            detail: String::new(),
        });
    }
    let detector = pipeline.detector();
    let groups = banddetect::group_specs(specs)?;

    let mut colors = Vec::with_capacity(groups.len());
    let mut mismatches: Vec<Vec<String>> = vec![Vec::new(); samples.len()];
    for rows in &groups {
        let started = Instant::now();
        let regions = row_regions(detector, rows, samples)?;
        let mut score = ColorScore::default();
        for (i, s) in samples.iter().enumerate() {
            let per_row: Vec<&MaskRegions> = regions.iter().map(|r| &r[i]).collect();
            let expected = s.expects(rows[0].digit);
            let found = band_count(rows, &per_row);
            score.record(expected, found);
            if found != expected {
                mismatches[i].push(rows[0].name.clone());
            }
        }
        colors.push(ColorReport {
            color: rows[0].name.clone(),
            digit: rows[0].digit,
            image_rate: score.image_rate(),
            band_rate: score.band_rate(),
            score,
            wall_time: started.elapsed(),
        });
    }

    let config_anchor = pipeline.config().anchor;
    let decoded: Vec<Result<Option<(String, Direction)>>> = samples
        .par_iter()
        .map(|s| {
            let anchor = match s.anchor {
                AnchorPolicy::Auto => config_anchor,
                pinned => pinned,
            };
            match pipeline.decode_with_specs(&s.image, anchor, specs) {
                Ok(r) => Ok(Some((r.code, r.direction))),
                Err(Error::NoBands(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut images = Vec::with_capacity(samples.len());
    for ((s, d), color_mismatches) in samples.iter().zip(decoded).zip(mismatches) {
        let d = d?;
        let hit = d.as_ref().is_some_and(|(code, _)| *code == s.code);
        images.push(ImageReport {
            path: s.path.to_string_lossy().replace('\\', "/"),
            expected: s.code.clone(),
            produced: d.as_ref().map(|(c, _)| c.clone()),
            direction: d.map(|(_, dir)| dir),
            hit,
            color_mismatches,
        });
    }
    let hits = images.iter().filter(|i| i.hit).count();
    Ok(EvalReport {
        split: split.to_string(),
        colors,
        combined: CombinedReport {
            images: images.len(),
            hits,
            exact_match_rate: hits as f64 / images.len() as f64,
        },
        images,
    })
}
