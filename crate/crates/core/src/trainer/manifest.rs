//! Labeled dataset index stored as CSV.
//!
//! ```text
//! path,code,crop_x,crop_y,crop_w,crop_h,anchor,split
//! slab_0000.png,23457,,,,,auto,train
//! ```
//!
//! Paths are relative to the manifest's directory. Empty crop fields mean
//! the full image; crops are in original image pixels. Extra columns after
//! `split` are allowed and ignored, so annotated files such as the review
//! service's corrections log load as manifests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decoder::AnchorPolicy;
use crate::error::{Error, Result};
use crate::raster::CropRect;

pub const MANIFEST_HEADER: [&str; 8] = [
    "path", "code", "crop_x", "crop_y", "crop_w", "crop_h", "anchor", "split",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            other => Err(Error::Parameter(format!(
                "unknown split `{other}` (expected train or validation)"
            ))),
        }
    }
}

/// Checks that `code` is a non-empty string of digits 0-7.
pub fn validate_code(code: &str) -> Result<()> {
    if code.is_empty() {
        return Err(Error::Parameter("code is empty".into()));
    }
    if let Some(c) = code.chars().find(|c| !('0'..='7').contains(c)) {
        return Err(Error::Parameter(format!(
            "code `{code}` contains `{c}`; only digits 0-7 are allowed"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub code: String,
    pub crop: Option<CropRect>,
    pub anchor: AnchorPolicy,
    pub split: Split,
}

impl ManifestEntry {
    /// Fields in header order.
    pub fn to_record(&self) -> [String; 8] {
        let crop =
            |f: fn(&CropRect) -> usize| self.crop.as_ref().map(|c| f(c).to_string()).unwrap_or_default();
        [
            self.path.to_string_lossy().replace('\\', "/"),
            self.code.clone(),
            crop(|c| c.x),
            crop(|c| c.y),
            crop(|c| c.w),
            crop(|c| c.h),
            self.anchor.to_string(),
            self.split.to_string(),
        ]
    }

    fn from_record(record: &csv::StringRecord) -> std::result::Result<Self, String> {
        if record.len() < MANIFEST_HEADER.len() {
            return Err(format!(
                "expected at least {} fields, found {}",
                MANIFEST_HEADER.len(),
                record.len()
            ));
        }
        let path = record[0].trim();
        if path.is_empty() {
            return Err("empty path".into());
        }
        let code = record[1].trim().to_string();
        validate_code(&code).map_err(|e| e.to_string())?;

        let crop_fields: Vec<&str> = (2..6).map(|i| record[i].trim()).collect();
        let crop = if crop_fields.iter().all(|f| f.is_empty()) {
            None
        } else {
            let nums = crop_fields
                .iter()
                .zip(&MANIFEST_HEADER[2..6])
                .map(|(f, name)| {
                    f.parse::<usize>()
                        .map_err(|_| format!("{name} `{f}` is not a non-negative integer"))
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Some(CropRect::new(nums[0], nums[1], nums[2], nums[3]))
        };
        let anchor_field = record[6].trim();
        let anchor = if anchor_field.is_empty() {
            AnchorPolicy::Auto
        } else {
            anchor_field.parse().map_err(|e: Error| e.to_string())?
        };
        let split = record[7].parse().map_err(|e: Error| e.to_string())?;
        Ok(Self {
            path: PathBuf::from(path),
            code,
            crop,
            anchor,
            split,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    /// Directory that entry paths are relative to.
    pub base_dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Parses CSV text without touching the file system. `origin` names the
    /// source in error messages.
    pub fn parse(text: &str, base_dir: &Path, origin: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(text.as_bytes());
        let parse_err = |line: u64, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?;
        let names: Vec<&str> = header.iter().map(str::trim).collect();
        if names.len() < MANIFEST_HEADER.len() || names[..MANIFEST_HEADER.len()] != MANIFEST_HEADER {
            return Err(parse_err(
                1,
                format!("header must start with `{}`", MANIFEST_HEADER.join(",")),
            ));
        }
        let mut entries = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                parse_err(line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line());
            entries.push(ManifestEntry::from_record(&record).map_err(|m| parse_err(line, m))?);
        }
        Ok(Self {
            base_dir: base_dir.to_path_buf(),
            entries,
        })
    }

    /// Reads and validates a manifest; every referenced image must exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let manifest = Self::parse(&text, &base, path)?;
        for entry in &manifest.entries {
            let full = manifest.resolve(entry);
            if !full.is_file() {
                return Err(Error::io(
                    full,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "image listed in manifest not found"),
                ));
            }
        }
        Ok(manifest)
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Config(format!("writing manifest: {e}"));
        writer.write_record(MANIFEST_HEADER).map_err(csv_err)?;
        for entry in &self.entries {
            writer.write_record(entry.to_record()).map_err(csv_err)?;
        }
        let bytes = writer.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?).map_err(|e| Error::io(path, e))
    }
}

/// Single CSV line (with trailing newline) for appending to a manifest.
pub fn csv_line(entry: &ManifestEntry) -> String {
    csv_line_with(entry, &[])
}

/// Like [`csv_line`], followed by `extra` trailing fields.
pub fn csv_line_with(entry: &ManifestEntry, extra: &[&str]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let record = entry.to_record();
    writer
        .write_record(record.iter().map(String::as_str).chain(extra.iter().copied()))
        .expect("writing to memory cannot fail");
    String::from_utf8(writer.into_inner().expect("flush to memory")).expect("csv output is utf-8")
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    DatasetManifest::load(path)
}
