use std::net::IpAddr;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use slabcode_core::trainer::Split;
use slabcode_core::{AnchorPolicy, CropRect};

#[derive(Debug, Parser)]
#[command(
    name = "slabcode",
    version,
    about = "Read color-band codes painted on granite slabs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decode the band code of one or more slab photos.
    Decode {
        #[arg(required = true)]
        images: Vec<PathBuf>,
        /// Band area `x,y,w,h` in original image pixels.
        #[arg(long, value_parser = parse_crop)]
        crop: Option<CropRect>,
        /// Color table (TOML); the built-in table when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the configured anchor policy.
        #[arg(long)]
        anchor: Option<AnchorPolicy>,
        /// Write one JSON record per image (JSON Lines); `-` for stdout.
        #[arg(long)]
        json_out: Option<PathBuf>,
    },
    /// Tune the color table on the training split of a manifest.
    Train {
        manifest: PathBuf,
        /// Search grid (TOML); defaults when omitted.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Starting color table.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Where to write the tuned config.
        #[arg(long, default_value = "trained.toml")]
        out: PathBuf,
        /// JSON training report.
        #[arg(long)]
        report_out: Option<PathBuf>,
    },
    /// Score a color table against one split of a manifest.
    Validate {
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "validation")]
        split: Split,
        /// JSON evaluation report.
        #[arg(long)]
        report_out: Option<PathBuf>,
    },
    /// Write a synthetic fixture set with a manifest.
    Generate {
        #[arg(long, default_value_t = 130)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
        /// clean, weathered (alias noisy).
        #[arg(long, default_value = "clean")]
        profile: String,
        /// Fraction of fixtures assigned to the training split.
        #[arg(long, default_value_t = 109.0 / 130.0)]
        split_ratio: f64,
    },
    /// Run the review HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Manifest-compatible CSV that corrections are appended to.
        #[arg(long)]
        corrections_file: Option<PathBuf>,
        #[arg(long, default_value_t = crate::service::DEFAULT_MAX_UPLOAD_BYTES)]
        max_upload_bytes: usize,
    },
    /// Print the effective configuration as TOML.
    Config {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Parses `x,y,w,h`.
pub fn parse_crop(text: &str) -> Result<CropRect, String> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(format!("crop `{text}` must be x,y,w,h"));
    }
    let mut v = [0usize; 4];
    for (slot, part) in v.iter_mut().zip(&parts) {
        *slot = part
            .parse()
            .map_err(|_| format!("crop component `{part}` is not a non-negative integer"))?;
    }
    Ok(CropRect::new(v[0], v[1], v[2], v[3]))
}
