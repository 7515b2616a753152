//! In-memory pixel grids and the pre-processing primitives that run on them:
//! downscaling, cropping, grayscale conversion, Gaussian blur and
//! binarization.

use serde::{Deserialize, Serialize};

use crate::colorspace::Rgb8;
use crate::error::{Error, Result};

/// Row-major grid of pixels. Width and height are always at least 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RasterImage<P> {
    width: usize,
    height: usize,
    pixels: Vec<P>,
}

pub type GrayImage = RasterImage<u8>;
pub type BitImage = RasterImage<bool>;

impl<P> RasterImage<P> {
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<P>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!("{width}x{height} image is empty")));
        }
        if pixels.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} pixels do not fill a {width}x{height} grid",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> P) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width.saturating_mul(height));
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::from_pixels(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[P] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<P> {
        self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> &P {
        &self.pixels[y * self.width + x]
    }

    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut P {
        &mut self.pixels[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[P] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    pub fn map<Q>(&self, f: impl FnMut(&P) -> Q) -> RasterImage<Q> {
        RasterImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(f).collect(),
        }
    }

    pub fn full_rect(&self) -> CropRect {
        CropRect::new(0, 0, self.width, self.height)
    }
}

impl<P: Clone> RasterImage<P> {
    pub fn filled(width: usize, height: usize, value: P) -> Result<Self> {
        Self::from_pixels(width, height, vec![value; width.saturating_mul(height)])
    }

    /// Mirrors the image top to bottom.
    pub fn flip_vertical(&self) -> Self {
        let mut pixels = Vec::with_capacity(self.pixels.len());
        for y in (0..self.height).rev() {
            pixels.extend_from_slice(self.row(y));
        }
        Self {
            width: self.width,
            height: self.height,
            pixels,
        }
    }
}

/// Axis-aligned crop rectangle in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CropRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl CropRect {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.w == 0 || self.h == 0 {
            return Err(Error::Bounds(format!("crop {self} has zero extent")));
        }
        let fits_x = self.x.checked_add(self.w).is_some_and(|e| e <= width);
        let fits_y = self.y.checked_add(self.h).is_some_and(|e| e <= height);
        if !fits_x || !fits_y {
            return Err(Error::Bounds(format!(
                "crop {self} exceeds {width}x{height} image"
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for CropRect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{},{}", self.x, self.y, self.w, self.h)
    }
}

impl std::str::FromStr for CropRect {
    type Err = Error;

    /// Parses `x,y,w,h`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::Parameter(format!("crop `{s}` must have the form x,y,w,h")));
        }
        let mut vals = [0usize; 4];
        for (slot, part) in vals.iter_mut().zip(&parts) {
            *slot = part
                .parse()
                .map_err(|_| Error::Parameter(format!("crop `{s}`: `{part}` is not a pixel count")))?;
        }
        Ok(Self::new(vals[0], vals[1], vals[2], vals[3]))
    }
}

/// Downscales with bilinear interpolation (pixel-center aligned).
///
/// Output dimensions are `max(1, round(factor * dim))`; `factor = 1` is the
/// identity.
pub fn scale_down(img: &RasterImage<Rgb8>, factor: f64) -> Result<RasterImage<Rgb8>> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(Error::Parameter(format!(
            "scale factor {factor} must lie in (0, 1]"
        )));
    }
    let out_w = ((img.width as f64 * factor).round() as usize).max(1);
    let out_h = ((img.height as f64 * factor).round() as usize).max(1);
    if out_w == img.width && out_h == img.height {
        return Ok(img.clone());
    }

    let xs = sample_positions(img.width, out_w);
    let ys = sample_positions(img.height, out_h);
    RasterImage::from_fn(out_w, out_h, |x, y| {
        let (x0, x1, tx) = xs[x];
        let (y0, y1, ty) = ys[y];
        let p00 = img.get(x0, y0);
        let p10 = img.get(x1, y0);
        let p01 = img.get(x0, y1);
        let p11 = img.get(x1, y1);
        let lerp = |a: u8, b: u8, c: u8, d: u8| {
            let top = f64::from(a) * (1.0 - tx) + f64::from(b) * tx;
            let bottom = f64::from(c) * (1.0 - tx) + f64::from(d) * tx;
            round_u8(top * (1.0 - ty) + bottom * ty)
        };
        Rgb8 {
            r: lerp(p00.r, p10.r, p01.r, p11.r),
            g: lerp(p00.g, p10.g, p01.g, p11.g),
            b: lerp(p00.b, p10.b, p01.b, p11.b),
        }
    })
}

fn sample_positions(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let ratio = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * ratio - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

pub(crate) fn round_u8(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn crop<P: Clone>(img: &RasterImage<P>, rect: CropRect) -> Result<RasterImage<P>> {
    rect.validate(img.width, img.height)?;
    let mut pixels = Vec::with_capacity(rect.w * rect.h);
    for y in rect.y..rect.y + rect.h {
        pixels.extend_from_slice(&img.row(y)[rect.x..rect.x + rect.w]);
    }
    RasterImage::from_pixels(rect.w, rect.h, pixels)
}

/// Luma weights 0.299 / 0.587 / 0.114, rounded to nearest.
pub fn to_grayscale(img: &RasterImage<Rgb8>) -> GrayImage {
    img.map(|p| round_u8(0.299 * f64::from(p.r) + 0.587 * f64::from(p.g) + 0.114 * f64::from(p.b)))
}

/// Square, normalized Gaussian convolution kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    size: usize,
    sigma: f64,
    weights: Vec<f64>,
}

impl GaussianKernel {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    /// Weight at offset `(dx, dy)` from the center, both in `-radius..=radius`.
    pub fn weight(&self, dx: isize, dy: isize) -> f64 {
        let r = self.radius() as isize;
        self.weights[((dy + r) as usize) * self.size + (dx + r) as usize]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Samples `exp(-(x^2 + y^2) / (2 sigma^2))` on the integer lattice around the
/// center and renormalizes the weights to sum to one.
pub fn make_gaussian_kernel(size: usize, sigma: f64) -> Result<GaussianKernel> {
    if size < 3 || size % 2 == 0 {
        return Err(Error::Parameter(format!(
            "kernel size {size} must be odd and at least 3"
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!("sigma {sigma} must be positive")));
    }
    let r = (size / 2) as isize;
    let mut weights = Vec::with_capacity(size * size);
    for y in -r..=r {
        for x in -r..=r {
            let d2 = (x * x + y * y) as f64;
            weights.push((-d2 / (2.0 * sigma * sigma)).exp());
        }
    }
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);
    Ok(GaussianKernel { size, sigma, weights })
}

/// Index into `0..len` for a possibly out-of-range coordinate, mirroring at
/// the borders with the edge pixel repeated (`cba|abc|cba`).
fn reflect(i: isize, len: usize) -> usize {
    let period = 2 * len as isize;
    let m = i.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// 2-D convolution with reflected borders. Output is rounded to nearest.
pub fn gaussian_blur(img: &GrayImage, kernel: &GaussianKernel) -> GrayImage {
    let (w, h) = (img.width, img.height);
    let r = kernel.radius() as isize;
    let size = kernel.size;
    let xmap: Vec<Vec<usize>> = (0..w as isize)
        .map(|x| (-r..=r).map(|dx| reflect(x + dx, w)).collect())
        .collect();
    let ymap: Vec<Vec<usize>> = (0..h as isize)
        .map(|y| (-r..=r).map(|dy| reflect(y + dy, h)).collect())
        .collect();

    let mut out = Vec::with_capacity(w * h);
    for rows in &ymap {
        for cols in &xmap {
            let mut acc = 0.0;
            for (ky, &sy) in rows.iter().enumerate() {
                let src = img.row(sy);
                let krow = &kernel.weights[ky * size..(ky + 1) * size];
                for (&kw, &sx) in krow.iter().zip(cols) {
                    acc += kw * f64::from(src[sx]);
                }
            }
            out.push(round_u8(acc));
        }
    }
    RasterImage {
        width: w,
        height: h,
        pixels: out,
    }
}

/// Any nonzero gray level becomes 1; zero stays 0.
pub fn binarize(img: &GrayImage) -> BitImage {
    img.map(|&v| v > 0)
}
