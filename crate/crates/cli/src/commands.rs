use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use slabcode_core::synthgen::{self, VariationProfile};
use slabcode_core::trainer::{self, DatasetManifest, ParamGrid, Split};
use slabcode_core::{imageio, AnchorPolicy, AppConfig, CropRect, Error, Pipeline};

use crate::args::{Cli, Command};
use crate::records::DecodeRecord;
use crate::service::{self, ServiceOptions};
use crate::Status;

pub fn dispatch(cli: Cli) -> Result<Status> {
    match cli.command {
        Command::Decode {
            images,
            crop,
            config,
            anchor,
            json_out,
        } => decode(&images, crop, config.as_deref(), anchor, json_out.as_deref()),
        Command::Train {
            manifest,
            grid,
            config,
            out,
            report_out,
        } => train(
            &manifest,
            grid.as_deref(),
            config.as_deref(),
            &out,
            report_out.as_deref(),
        ),
        Command::Validate {
            manifest,
            config,
            split,
            report_out,
        } => validate(&manifest, config.as_deref(), split, report_out.as_deref()),
        Command::Generate {
            n,
            seed,
            out_dir,
            profile,
            split_ratio,
        } => generate(n, seed, &out_dir, &profile, split_ratio),
        Command::Serve {
            host,
            port,
            config,
            corrections_file,
            max_upload_bytes,
        } => {
            let config = load_config(config.as_deref())?;
            let corrections = corrections_file
                .or_else(|| config.corrections_file.clone())
                .unwrap_or_else(|| PathBuf::from(service::DEFAULT_CORRECTIONS_FILE));
            let options = ServiceOptions {
                corrections_file: corrections,
                max_upload_bytes,
            };
            let runtime = tokio::runtime::Runtime::new().context("starting async runtime")?;
            runtime.block_on(service::serve((host, port).into(), config, options))?;
            Ok(Status::Ok)
        }
        Command::Config { config } => {
            print!("{}", load_config(config.as_deref())?.to_toml_string()?);
            Ok(Status::Ok)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<AppConfig> {
    Ok(AppConfig::load_or_default(path)?)
}

/// Opens `path` for writing; `-` means standard output.
fn open_output(path: &Path) -> Result<Box<dyn Write>> {
    if path == Path::new("-") {
        return Ok(Box::new(io::stdout().lock()));
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(Box::new(BufWriter::new(file)))
}

fn decode(
    images: &[PathBuf],
    crop: Option<CropRect>,
    config: Option<&Path>,
    anchor: Option<AnchorPolicy>,
    json_out: Option<&Path>,
) -> Result<Status> {
    let config = load_config(config)?;
    let anchor = anchor.unwrap_or(config.anchor);
    let pipeline = Pipeline::new(config)?;
    let mut json = json_out.map(open_output).transpose()?;
    let to_stdout = json_out == Some(Path::new("-"));
    let single = images.len() == 1;

    let mut failed = false;
    let mut empty = false;
    for path in images {
        let decoded = imageio::load_image(path).and_then(|img| pipeline.decode_image(&img, crop, anchor));
        let record = match decoded {
            Ok(result) => {
                if !to_stdout {
                    if single {
                        println!("code={} direction={}", result.code, result.direction);
                    } else {
                        println!(
                            "{}: code={} direction={}",
                            path.display(),
                            result.code,
                            result.direction
                        );
                    }
                }
                for w in &result.warnings {
                    eprintln!("warning: {}: {w}", path.display());
                }
                Some(DecodeRecord::decoded(path, &result))
            }
            Err(Error::NoBands(report)) => {
                empty = true;
                if single {
                    eprintln!("no bands detected");
                } else {
                    eprintln!("{}: no bands detected", path.display());
                }
                Some(DecodeRecord::empty(path, report.warnings))
            }
            Err(err) => {
                failed = true;
                eprintln!("error: {}: {err}", path.display());
                None
            }
        };
        if let (Some(out), Some(record)) = (json.as_mut(), record) {
            out.write_all(record.to_json_line().as_bytes())?;
        }
    }
    if let Some(mut out) = json {
        out.flush()?;
    }
    if failed {
        bail!("some images could not be decoded");
    }
    Ok(if empty { Status::NoBands } else { Status::Ok })
}

fn write_report(path: Option<&Path>, json: &str) -> Result<()> {
    if let Some(path) = path {
        let mut out = open_output(path)?;
        out.write_all(json.as_bytes())?;
        out.flush()?;
    }
    Ok(())
}

fn train(
    manifest: &Path,
    grid: Option<&Path>,
    config: Option<&Path>,
    out: &Path,
    report_out: Option<&Path>,
) -> Result<Status> {
    let config = load_config(config)?;
    let grid = match grid {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ParamGrid::from_toml_str(&text).with_context(|| format!("grid {}", path.display()))?
        }
        None => ParamGrid::default(),
    };
    let manifest = DatasetManifest::load(manifest)?;
    let (tuned, report) = trainer::train_manifest(&config, &manifest, &grid)?;
    print!("{}", report.to_table());
    tuned.save(out)?;
    eprintln!("wrote {}", out.display());
    write_report(report_out, &report.to_json())?;
    Ok(Status::Ok)
}

fn validate(
    manifest: &Path,
    config: Option<&Path>,
    split: Split,
    report_out: Option<&Path>,
) -> Result<Status> {
    let config = load_config(config)?;
    let manifest = DatasetManifest::load(manifest)?;
    let report = trainer::validate_manifest(&config, &manifest, split)?;
    print!("{}", report.to_table());
    write_report(report_out, &report.to_json())?;
    Ok(Status::Ok)
}

fn generate(n: usize, seed: u64, out_dir: &Path, profile: &str, split_ratio: f64) -> Result<Status> {
    let profile = VariationProfile::by_name(profile)?;
    let manifest = synthgen::generate_dataset(out_dir, n, split_ratio, seed, &profile)?;
    let train = manifest.split(Split::Train).count();
    println!(
        "wrote {} fixtures ({} train, {} validation) to {}",
        manifest.entries.len(),
        train,
        manifest.entries.len() - train,
        out_dir.display()
    );
    Ok(Status::Ok)
}
