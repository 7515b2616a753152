//! PNG / PPM / JPEG decoding and encoding at the file boundary.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, RgbImage};

use crate::colorspace::Rgb8;
use crate::error::{Error, Result};
use crate::raster::RasterImage;

fn from_rgb_image(img: RgbImage) -> Result<RasterImage<Rgb8>> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels = img
        .into_raw()
        .chunks_exact(3)
        .map(|c| Rgb8::new(c[0], c[1], c[2]))
        .collect();
    RasterImage::from_pixels(w, h, pixels)
}

fn to_rgb_image(img: &RasterImage<Rgb8>) -> RgbImage {
    let raw = img.pixels().iter().flat_map(|p| [p.r, p.g, p.b]).collect();
    RgbImage::from_raw(img.width() as u32, img.height() as u32, raw).expect("raster dimensions match buffer")
}

/// Decodes an in-memory PNG, JPEG or binary PPM.
pub fn decode_bytes(bytes: &[u8]) -> Result<RasterImage<Rgb8>> {
    let img = image::load_from_memory(bytes).map_err(|e| Error::Image {
        path: "<upload>".into(),
        message: e.to_string(),
    })?;
    from_rgb_image(img.to_rgb8())
}

pub fn load_image(path: &Path) -> Result<RasterImage<Rgb8>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    from_rgb_image(img.to_rgb8())
}

pub fn encode_png(img: &RasterImage<Rgb8>) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    to_rgb_image(img)
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: "<memory>".into(),
            message: e.to_string(),
        })?;
    Ok(out.into_inner())
}

/// Binary PPM (P6), written by hand so the bytes are fully predictable.
pub fn encode_ppm(img: &RasterImage<Rgb8>) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.pixels().iter().flat_map(|p| [p.r, p.g, p.b]));
    out
}

/// Writes PNG or PPM depending on the file extension (PNG by default).
pub fn save_image(img: &RasterImage<Rgb8>, path: &Path) -> Result<()> {
    let is_ppm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
    let bytes = if is_ppm { encode_ppm(img) } else { encode_png(img)? };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
