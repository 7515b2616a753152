//! Deterministic synthetic slab images with known codes.
//!
//! A fixture is a speckled gray "granite" background with one horizontal
//! paint stripe per digit, stacked from the top or the bottom edge. Stripes
//! can be cut by a vertical gap (as happens when a painted block is sawn
//! into slabs), faded toward the background, and the whole picture can be
//! shifted in brightness and hue.
//!
//! All randomness comes from ChaCha8 (`rand_chacha`) seeded with a 64-bit
//! value, and only raw `next_u64` output is consumed, so a `(code, params)`
//! pair reproduces the same bytes on every platform.
//!
//! Geometry is snapped to a 20 px lattice. At the default 15% downscale 20
//! source pixels map to exactly 3 detection pixels, so stripe edges land on
//! whole pixels and clean fixtures carry no blended edge rows.

use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colorspace::{Hsv8, Rgb8};
use crate::decoder::AnchorPolicy;
use crate::error::{Error, Result};
use crate::imageio;
use crate::raster::RasterImage;
use crate::trainer::manifest::{DatasetManifest, ManifestEntry, Split};

pub const LATTICE: usize = 20;

/// Gray range of the background value noise.
pub const BACKGROUND_RANGE: (u8, u8) = (105, 165);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlabAnchor {
    Top,
    Bottom,
}

impl SlabAnchor {
    pub fn policy(self) -> AnchorPolicy {
        match self {
            SlabAnchor::Top => AnchorPolicy::Top,
            SlabAnchor::Bottom => AnchorPolicy::Bottom,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            SlabAnchor::Top => SlabAnchor::Bottom,
            SlabAnchor::Bottom => SlabAnchor::Top,
        }
    }
}

/// Everything that determines one fixture besides its code. Lengths are in
/// original-image pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    pub width: usize,
    pub height: usize,
    pub anchor: SlabAnchor,
    pub band_height: usize,
    /// Distance between the top edges of consecutive bands.
    pub band_spacing: usize,
    /// Distance from the anchor edge to the first band.
    pub edge_margin: usize,
    /// Horizontal distance from each image side to the band ends.
    pub side_margin: usize,
    pub gap_width: usize,
    pub gap_probability: f64,
    /// Weathering: 0 is fresh paint, 1 is fully worn back to the background.
    pub fade: f64,
    pub brightness_shift: i32,
    /// Hue rotation of the paint, in half-degrees.
    pub hue_jitter: i32,
    pub noise_seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            width: 700,
            height: 3000,
            anchor: SlabAnchor::Top,
            band_height: 100,
            band_spacing: 540,
            edge_margin: 160,
            side_margin: 100,
            gap_width: 80,
            gap_probability: 0.0,
            fade: 0.0,
            brightness_shift: 0,
            hue_jitter: 0,
            noise_seed: 0,
        }
    }
}

impl SynthParams {
    fn validate(&self, bands: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gap_probability) || !(0.0..=1.0).contains(&self.fade) {
            return Err(Error::Parameter(
                "gap_probability and fade must lie in [0, 1]".into(),
            ));
        }
        if !(-64..=64).contains(&self.brightness_shift) {
            return Err(Error::Parameter(format!(
                "brightness shift {} outside -64..=64",
                self.brightness_shift
            )));
        }
        if self.band_spacing <= self.band_height || self.band_height == 0 {
            return Err(Error::Layout(format!(
                "band spacing {} must exceed band height {}",
                self.band_spacing, self.band_height
            )));
        }
        let band_w = self.width.saturating_sub(2 * self.side_margin);
        if band_w < 3 * LATTICE {
            return Err(Error::Layout(format!(
                "side margin {} leaves no room for bands in width {}",
                self.side_margin, self.width
            )));
        }
        let extent = self.edge_margin + (bands - 1) * self.band_spacing + self.band_height;
        if extent > self.height {
            return Err(Error::Layout(format!(
                "{bands} bands need {extent} px but the image is {} px tall",
                self.height
            )));
        }
        // The stack must sit on its anchor's side of the midline.
        let mean_center = self.edge_margin as f64
            + self.band_height as f64 / 2.0
            + (bands - 1) as f64 * self.band_spacing as f64 / 2.0;
        if mean_center >= self.height as f64 / 2.0 {
            return Err(Error::Layout(format!(
                "{bands} bands do not fit in the {} half of a {} px image",
                match self.anchor {
                    SlabAnchor::Top => "top",
                    SlabAnchor::Bottom => "bottom",
                },
                self.height
            )));
        }
        Ok(())
    }

    /// Top row of band `i` (0 is the band nearest the anchor edge).
    pub fn band_top(&self, i: usize) -> usize {
        let from_edge = self.edge_margin + i * self.band_spacing;
        match self.anchor {
            SlabAnchor::Top => from_edge,
            SlabAnchor::Bottom => self.height - from_edge - self.band_height,
        }
    }
}

/// Paint variety used for one digit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paint {
    pub digit: u8,
    pub name: &'static str,
    pub hsv: Hsv8,
}

/// Reference paints, each at the center of its color table row. Black is
/// neutral at the row's value center, red uses the high-hue row, and light
/// brown sits at the center of the hue span it does not share with orange.
pub const PALETTE: [Paint; 9] = [
    Paint {
        digit: 0,
        name: "black",
        hsv: Hsv8::new(0, 0, 27),
    },
    Paint {
        digit: 1,
        name: "dark brown",
        hsv: Hsv8::new(10, 152, 96),
    },
    Paint {
        digit: 1,
        name: "light brown",
        hsv: Hsv8::new(17, 164, 148),
    },
    Paint {
        digit: 2,
        name: "red",
        hsv: Hsv8::new(175, 177, 179),
    },
    Paint {
        digit: 3,
        name: "orange",
        hsv: Hsv8::new(10, 183, 185),
    },
    Paint {
        digit: 4,
        name: "yellow",
        hsv: Hsv8::new(33, 162, 148),
    },
    Paint {
        digit: 5,
        name: "green",
        hsv: Hsv8::new(60, 157, 127),
    },
    Paint {
        digit: 6,
        name: "blue",
        hsv: Hsv8::new(95, 184, 127),
    },
    Paint {
        digit: 7,
        name: "purple",
        hsv: Hsv8::new(137, 138, 168),
    },
];

fn paints_for(digit: u8) -> Vec<&'static Paint> {
    PALETTE.iter().filter(|p| p.digit == digit).collect()
}

/// Inverse of the 8-bit HSV convention, in floating point.
pub fn hsv_to_rgb(p: Hsv8) -> Rgb8 {
    let h = f64::from(p.h) * 2.0;
    let v = f64::from(p.v);
    let c = v * f64::from(p.s) / 255.0;
    let sector = h / 60.0;
    let x = c * (1.0 - (sector % 2.0 - 1.0).abs());
    let (r, g, b) = match sector as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |t: f64| (t + m).round().clamp(0.0, 255.0) as u8;
    Rgb8::new(q(r), q(g), q(b))
}

/// Portable stream of draws on top of ChaCha8.
pub struct SynthRng(ChaCha8Rng);

impl SynthRng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int_in(&mut self, lo: i64, hi: i64) -> i64 {
        debug_assert!(lo <= hi);
        let span = (hi - lo) as u64 + 1;
        lo + (self.0.next_u64() % span) as i64
    }

    pub fn float_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.unit() < p
    }
}

/// What was generated, enough to regenerate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub code: String,
    pub anchor: SlabAnchor,
    /// Paint used for each band, in reading order.
    pub paints: Vec<String>,
    /// Whether each band, in reading order, is cut by a gap.
    pub cut: Vec<bool>,
    pub params: SynthParams,
}

struct Stripe {
    top: usize,
    paint: Rgb8,
    /// Half-open x range of the cut, if any.
    gap: Option<(usize, usize)>,
}

fn parse_code(code: &str) -> Result<Vec<u8>> {
    if code.is_empty() {
        return Err(Error::Parameter("code must not be empty".into()));
    }
    code.chars()
        .map(|c| match c {
            '0'..='7' => Ok(c as u8 - b'0'),
            _ => Err(Error::Parameter(format!("code `{code}` has non 0-7 digit `{c}`"))),
        })
        .collect()
}

fn snap(v: usize) -> usize {
    v / LATTICE * LATTICE
}

/// Renders one fixture. Digits are painted in reading order starting at the
/// anchor edge.
pub fn generate_slab(code: &str, params: &SynthParams) -> Result<(RasterImage<Rgb8>, FixtureRecord)> {
    let digits = parse_code(code)?;
    params.validate(digits.len())?;
    let mut rng = SynthRng::new(params.noise_seed);
    let (w, h) = (params.width, params.height);

    // Background value noise on a coarse lattice.
    const CELL: usize = 40;
    let gw = w / CELL + 2;
    let gh = h / CELL + 2;
    let (lo, hi) = BACKGROUND_RANGE;
    let lattice: Vec<f64> = (0..gw * gh)
        .map(|_| rng.float_in(f64::from(lo), f64::from(hi)))
        .collect();

    // Stripe layout, nearest the anchor first.
    let x0 = snap(params.side_margin);
    let x1 = snap(w - params.side_margin);
    let gap_w = snap(params.gap_width).max(LATTICE);
    let min_piece = (x1 - x0).saturating_sub(gap_w) * 3 / 10;
    let mut stripes = Vec::with_capacity(digits.len());
    let mut paint_names = Vec::with_capacity(digits.len());
    for (i, &d) in digits.iter().enumerate() {
        let options = paints_for(d);
        let paint = options[(rng.next_u64() % options.len() as u64) as usize];
        let hsv = Hsv8 {
            h: (i32::from(paint.hsv.h) + params.hue_jitter).rem_euclid(180) as u8,
            ..paint.hsv
        };
        let gap = if rng.chance(params.gap_probability) {
            let first = snap(x0 + min_piece + LATTICE - 1);
            let last = snap(x1 - min_piece - gap_w);
            let slots = (last.saturating_sub(first)) / LATTICE + 1;
            let start = first + (rng.next_u64() % slots as u64) as usize * LATTICE;
            Some((start, start + gap_w))
        } else {
            None
        };
        stripes.push(Stripe {
            top: snap(params.band_top(i)),
            paint: hsv_to_rgb(hsv),
            gap,
        });
        paint_names.push(paint.name.to_string());
    }

    let band_h = params.band_height;
    let fade = params.fade;
    let shift = params.brightness_shift;
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        let gy = y as f64 / CELL as f64;
        let (cy, ty) = (gy.floor() as usize, gy.fract());
        let stripe = stripes.iter().find(|s| y >= s.top && y < s.top + band_h);
        for x in 0..w {
            let gx = x as f64 / CELL as f64;
            let (cx, tx) = (gx.floor() as usize, gx.fract());
            let l = |i: usize, j: usize| lattice[j * gw + i];
            let base = (l(cx, cy) * (1.0 - tx) + l(cx + 1, cy) * tx) * (1.0 - ty)
                + (l(cx, cy + 1) * (1.0 - tx) + l(cx + 1, cy + 1) * tx) * ty;
            let speckle = rng.int_in(-6, 6) as f64;
            let mut bg = [0.0; 3];
            for c in &mut bg {
                *c = base + speckle + rng.int_in(-2, 2) as f64;
            }

            let painted =
                stripe.filter(|s| x >= x0 && x < x1 && !s.gap.is_some_and(|(g0, g1)| x >= g0 && x < g1));
            let mut px = match painted {
                Some(s) => {
                    let paint = [s.paint.r, s.paint.g, s.paint.b];
                    let mut out = [0.0; 3];
                    for ((o, &p), &b) in out.iter_mut().zip(&paint).zip(&bg) {
                        let jitter = rng.int_in(-2, 2) as f64;
                        *o = (f64::from(p) + jitter) * (1.0 - fade) + b * fade;
                    }
                    out
                }
                None => bg,
            };
            for c in &mut px {
                *c = (*c + f64::from(shift)).round().clamp(0.0, 255.0);
            }
            pixels.push(Rgb8::new(px[0] as u8, px[1] as u8, px[2] as u8));
        }
    }

    let img = RasterImage::from_pixels(w, h, pixels)?;
    let record = FixtureRecord {
        path: None,
        code: code.to_string(),
        anchor: params.anchor,
        paints: paint_names,
        cut: stripes.iter().map(|s| s.gap.is_some()).collect(),
        params: params.clone(),
    };
    Ok((img, record))
}

/// Ranges that per-fixture parameters are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariationProfile {
    pub code_length: usize,
    pub fade: (f64, f64),
    pub brightness_shift: (i32, i32),
    pub hue_jitter: (i32, i32),
    pub gap_probability: f64,
    /// Geometry shared by every fixture; anchor and noise seed are drawn.
    pub base: SynthParams,
}

impl VariationProfile {
    /// Fresh paint, no lighting changes; half the stripes are cut.
    pub fn clean() -> Self {
        Self {
            code_length: 5,
            fade: (0.0, 0.0),
            brightness_shift: (0, 0),
            hue_jitter: (0, 0),
            gap_probability: 0.5,
            base: SynthParams::default(),
        }
    }

    /// Field-like conditions: weathering up to 0.35, brightness within
    /// +-40, hue within +-4 half-degrees, half the stripes cut.
    pub fn weathered() -> Self {
        Self {
            fade: (0.0, 0.35),
            brightness_shift: (-40, 40),
            hue_jitter: (-4, 4),
            ..Self::clean()
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "clean" => Ok(Self::clean()),
            "weathered" | "noisy" => Ok(Self::weathered()),
            other => Err(Error::Parameter(format!(
                "unknown profile `{other}` (expected clean or weathered)"
            ))),
        }
    }
}

/// One planned fixture of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FixturePlan {
    pub index: usize,
    pub code: String,
    pub params: SynthParams,
    pub split: Split,
}

/// Draws codes, parameters and split assignments for `n` fixtures. Exactly
/// `round(n * split_ratio)` fixtures go to the training split.
pub fn plan_dataset(
    n: usize,
    split_ratio: f64,
    seed: u64,
    profile: &VariationProfile,
) -> Result<Vec<FixturePlan>> {
    if n < 2 {
        return Err(Error::Parameter(format!(
            "dataset needs at least 2 images, got {n}"
        )));
    }
    if !(0.0..=1.0).contains(&split_ratio) {
        return Err(Error::Parameter(format!(
            "split ratio {split_ratio} outside [0, 1]"
        )));
    }
    if profile.code_length == 0 {
        return Err(Error::Parameter("code length must be at least 1".into()));
    }
    let mut rng = SynthRng::new(seed);
    let mut plans = Vec::with_capacity(n);
    for index in 0..n {
        let code: String = (0..profile.code_length)
            .map(|_| char::from(b'0' + (rng.next_u64() % 8) as u8))
            .collect();
        let anchor = if rng.next_u64() % 2 == 0 {
            SlabAnchor::Top
        } else {
            SlabAnchor::Bottom
        };
        let params = SynthParams {
            anchor,
            gap_probability: profile.gap_probability,
            fade: rng.float_in(profile.fade.0, profile.fade.1),
            brightness_shift: rng.int_in(
                i64::from(profile.brightness_shift.0),
                i64::from(profile.brightness_shift.1),
            ) as i32,
            hue_jitter: rng.int_in(i64::from(profile.hue_jitter.0), i64::from(profile.hue_jitter.1)) as i32,
            noise_seed: rng.next_u64(),
            ..profile.base.clone()
        };
        plans.push(FixturePlan {
            index,
            code,
            params,
            split: Split::Validation,
        });
    }

    // Fisher-Yates over indices picks the training members.
    let n_train = (n as f64 * split_ratio).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
    for &i in &order[..n_train] {
        plans[i].split = Split::Train;
    }
    Ok(plans)
}

/// Renders every planned fixture in memory.
pub fn generate_fixtures(
    n: usize,
    seed: u64,
    profile: &VariationProfile,
) -> Result<Vec<(RasterImage<Rgb8>, FixtureRecord)>> {
    plan_dataset(n, 1.0, seed, profile)?
        .par_iter()
        .map(|p| generate_slab(&p.code, &p.params))
        .collect()
}

pub fn fixture_file_name(index: usize) -> String {
    format!("slab_{index:04}.png")
}

/// Writes `n` PNG fixtures, `manifest.csv` and `fixtures.json` to `out_dir`.
pub fn generate_dataset(
    out_dir: &Path,
    n: usize,
    split_ratio: f64,
    seed: u64,
    profile: &VariationProfile,
) -> Result<DatasetManifest> {
    let plans = plan_dataset(n, split_ratio, seed, profile)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let records: Vec<FixtureRecord> = plans
        .par_iter()
        .map(|p| {
            let (img, mut record) = generate_slab(&p.code, &p.params)?;
            let name = fixture_file_name(p.index);
            imageio::save_image(&img, &out_dir.join(&name))?;
            record.path = Some(PathBuf::from(name));
            Ok(record)
        })
        .collect::<Result<_>>()?;

    let manifest = DatasetManifest {
        base_dir: out_dir.to_path_buf(),
        entries: plans
            .iter()
            .map(|p| ManifestEntry {
                path: PathBuf::from(fixture_file_name(p.index)),
                code: p.code.clone(),
                crop: None,
                anchor: AnchorPolicy::Auto,
                split: p.split,
            })
            .collect(),
    };
    manifest.write_csv(&out_dir.join("manifest.csv"))?;
    let json = serde_json::to_string_pretty(&records).map_err(|e| Error::Config(e.to_string()))?;
    let json_path = out_dir.join("fixtures.json");
    std::fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;
    Ok(manifest)
}
