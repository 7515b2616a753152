//! 8-bit RGB and HSV pixel types and the RGB to HSV conversion.
//!
//! HSV follows the 8-bit storage convention used by the color tables: hue is
//! kept in half-degrees (`0..=179`), saturation and value in `0..=255`. The
//! tables never state this convention outright; it is the only one under
//! which their `Hmax = 179` bound makes sense.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::raster::RasterImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Rgb8 {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Rgb8 {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b }
    }

    pub const fn gray(v: u8) -> Self {
        Self { r: v, g: v, b: v }
    }
}

/// HSV pixel: `h` in half-degrees `0..=179`, `s` and `v` in `0..=255`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Hsv8 {
    pub h: u8,
    pub s: u8,
    pub v: u8,
}

impl Hsv8 {
    pub const fn new(h: u8, s: u8, v: u8) -> Self {
        Self { h, s, v }
    }
}

/// Converts one pixel to HSV.
///
/// `V = max`, `S = round(255 * (max - min) / max)` (0 for black), and hue is
/// the piecewise sector formula scaled to half-degrees and rounded half-up.
/// Achromatic pixels (`S = 0`) get `H = 0`. Everything is exact integer
/// arithmetic, so results never depend on float rounding.
pub fn rgb_to_hsv(p: Rgb8) -> Hsv8 {
    let (r, g, b) = (i32::from(p.r), i32::from(p.g), i32::from(p.b));
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;

    let s = if max == 0 {
        0
    } else {
        (2 * 255 * delta + max) / (2 * max)
    };

    let h = if delta == 0 {
        0
    } else {
        // Half-degrees: each 60 degree sector spans 30 units.
        let (base, num) = if r == max {
            (0, g - b)
        } else if g == max {
            (60, b - r)
        } else {
            (120, r - g)
        };
        let offset = (2 * 30 * num + delta).div_euclid(2 * delta);
        (base + offset).rem_euclid(180)
    };

    Hsv8 {
        h: h as u8,
        s: s as u8,
        v: max as u8,
    }
}

pub fn convert_image_to_hsv(img: &RasterImage<Rgb8>) -> Result<RasterImage<Hsv8>> {
    Ok(img.map(|&p| rgb_to_hsv(p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn primaries() {
        assert_eq!(rgb_to_hsv(Rgb8::new(255, 0, 0)), Hsv8::new(0, 255, 255));
        assert_eq!(rgb_to_hsv(Rgb8::new(0, 0, 0)), Hsv8::new(0, 0, 0));
        assert_eq!(rgb_to_hsv(Rgb8::new(0, 128, 0)), Hsv8::new(60, 255, 128));
        assert_eq!(rgb_to_hsv(Rgb8::new(0, 0, 255)), Hsv8::new(120, 255, 255));
    }

    #[test]
    fn hue_near_360_wraps_to_zero() {
        // 359.x degrees rounds to 180 half-degrees, which must wrap.
        let hsv = rgb_to_hsv(Rgb8::new(255, 0, 1));
        assert_eq!(hsv.h, 0);
        // 357.6 degrees is 178.8 half-degrees.
        let hsv = rgb_to_hsv(Rgb8::new(255, 0, 10));
        assert_eq!(hsv.h, 179);
        let hsv = rgb_to_hsv(Rgb8::new(255, 0, 20));
        assert_eq!(hsv.h, 178);
    }

    #[test]
    fn image_conversion() {
        let img = RasterImage::from_pixels(1, 1, vec![Rgb8::new(255, 0, 0)]).unwrap();
        let hsv = convert_image_to_hsv(&img).unwrap();
        assert_eq!(hsv.pixels(), &[Hsv8::new(0, 255, 255)]);

        let black = RasterImage::filled(2, 2, Rgb8::gray(0)).unwrap();
        let hsv = convert_image_to_hsv(&black).unwrap();
        assert!(hsv.pixels().iter().all(|&p| p == Hsv8::new(0, 0, 0)));
        assert_eq!((hsv.width(), hsv.height()), (2, 2));
    }

    proptest! {
        #[test]
        fn value_is_max_channel(r: u8, g: u8, b: u8) {
            prop_assert_eq!(rgb_to_hsv(Rgb8::new(r, g, b)).v, r.max(g).max(b));
        }

        #[test]
        fn grays_are_achromatic(v: u8) {
            let hsv = rgb_to_hsv(Rgb8::gray(v));
            prop_assert_eq!((hsv.h, hsv.s), (0, 0));
        }

        #[test]
        fn hue_is_intensity_invariant(r: u8, g: u8, b: u8, k in 0.05f64..=1.0) {
            let scaled = Rgb8::new(
                (f64::from(r) * k).floor() as u8,
                (f64::from(g) * k).floor() as u8,
                (f64::from(b) * k).floor() as u8,
            );
            let after = rgb_to_hsv(scaled);
            // Flooring each channel moves the hue by up to ~60/delta half-degrees,
            // so the +-2 bound only holds once the chroma spread is large enough.
            let spread = scaled.r.max(scaled.g).max(scaled.b) - scaled.r.min(scaled.g).min(scaled.b);
            prop_assume!(after.s > 10 && spread >= 64);
            let before = rgb_to_hsv(Rgb8::new(r, g, b));
            let d = (i32::from(before.h) - i32::from(after.h)).rem_euclid(180);
            let d = d.min(180 - d);
            prop_assert!(d <= 2, "{:?} vs {:?}", before, after);
        }
    }
}
