//! Application configuration: color specs, scaling, blur and anchoring.
//!
//! Stored as a versioned TOML file. The compiled-in default carries the
//! trained color table, with red and brown split into two rows each.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::banddetect::{self, ColorSpec, DetectParams};
use crate::decoder::AnchorPolicy;
use crate::error::{Error, Result};
use crate::segmentation::HsvRange;

pub const CONFIG_VERSION: u32 = 1;
pub const DEFAULT_SCALE_FACTOR: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub version: u32,
    /// Downscale factor applied before cropping and detection.
    pub scale_factor: f64,
    #[serde(default)]
    pub anchor: AnchorPolicy,
    #[serde(default)]
    pub detect: DetectParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrections_file: Option<PathBuf>,
    pub colors: Vec<ColorSpec>,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            scale_factor: DEFAULT_SCALE_FACTOR,
            anchor: AnchorPolicy::Auto,
            detect: DetectParams::default(),
            corrections_file: None,
            colors: default_color_specs(),
        }
    }
}

impl AppConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if !(self.scale_factor > 0.0 && self.scale_factor <= 1.0) {
            return Err(Error::Config(format!(
                "scale_factor {} must lie in (0, 1]",
                self.scale_factor
            )));
        }
        crate::raster::make_gaussian_kernel(self.detect.blur_size, self.detect.blur_sigma)
            .map_err(|e| Error::Config(e.to_string()))?;
        banddetect::group_specs(&self.colors)?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: AppConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Loads `path` if given, otherwise the compiled-in defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }
}

#[allow(clippy::too_many_arguments)]
fn row(
    name: &str,
    variant: Option<&str>,
    digit: u8,
    swatch: &str,
    geometry: (u64, f64, f64, f64),
    h: (u8, u8),
    s: (u8, u8),
    v: (u8, u8),
) -> ColorSpec {
    let (ca, cr, whr, mvd) = geometry;
    ColorSpec {
        name: name.to_string(),
        variant: variant.map(str::to_string),
        digit,
        swatch: Some(swatch.to_string()),
        ranges: vec![HsvRange::new(h, s, v)],
        ca,
        cr,
        whr,
        mvd,
    }
}

/// The trained color table: (CA, CR, WHR, MVD) and the HSV box per row.
pub fn default_color_specs() -> Vec<ColorSpec> {
    vec![
        row(
            "black",
            None,
            0,
            "#000000",
            (50, 0.0, 0.8, 16.0),
            (0, 179),
            (0, 255),
            (3, 51),
        ),
        row(
            "brown",
            Some("dark"),
            1,
            "#663300",
            (300, 0.0, 1.2, 72.0),
            (5, 15),
            (49, 255),
            (64, 128),
        ),
        row(
            "brown",
            Some("light"),
            1,
            "#b35900",
            (300, 0.0, 1.2, 72.0),
            (14, 18),
            (74, 255),
            (132, 165),
        ),
        row(
            "red",
            Some("high-hue"),
            2,
            "#ff0000",
            (50, 0.0, 0.4, 22.0),
            (171, 179),
            (100, 255),
            (103, 255),
        ),
        row(
            "red",
            Some("low-hue"),
            2,
            "#ff0000",
            (50, 0.0, 0.4, 30.0),
            (1, 5),
            (93, 255),
            (97, 255),
        ),
        row(
            "orange",
            None,
            3,
            "#ffa500",
            (250, 0.0, 1.1, 29.0),
            (6, 15),
            (112, 255),
            (116, 255),
        ),
        row(
            "yellow",
            None,
            4,
            "#ffff00",
            (150, 0.0, 0.2, 16.0),
            (23, 43),
            (69, 255),
            (42, 255),
        ),
        row(
            "green",
            None,
            5,
            "#008000",
            (150, 0.0, 0.8, 18.0),
            (40, 80),
            (60, 255),
            (0, 255),
        ),
        row(
            "blue",
            None,
            6,
            "#0000ff",
            (100, 0.0, 0.6, 32.0),
            (81, 109),
            (113, 255),
            (0, 255),
        ),
        row(
            "purple",
            None,
            7,
            "#800080",
            (200, 0.0, 0.7, 30.0),
            (120, 155),
            (21, 255),
            (81, 255),
        ),
    ]
}
