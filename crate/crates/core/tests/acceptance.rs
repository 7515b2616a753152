//! Acceptance suite. Every criterion runs, prints one PASS/FAIL line with
//! its measurement, and the process exits non-zero if any failed.

use std::collections::VecDeque;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slabcode_core::banddetect::group_by_mvd;
use slabcode_core::colorspace::rgb_to_hsv;
use slabcode_core::raster::{make_gaussian_kernel, BitImage};
use slabcode_core::segmentation::connected_components;
use slabcode_core::synthgen::{self, SlabAnchor, VariationProfile};
use slabcode_core::trainer::{self, DatasetManifest, ParamGrid, Split};
use slabcode_core::{AnchorPolicy, AppConfig, BoundingRect, Pipeline, RasterImage, Rgb8};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

/// Double-precision HSV with H in degrees, S and V in [0, 1], then scaled
/// to the 8-bit convention (H/2, S*255, V*255) with rounding.
fn reference_hsv(r: u8, g: u8, b: u8) -> (f64, f64, f64) {
    let (r, g, b) = (f64::from(r) / 255.0, f64::from(g) / 255.0, f64::from(b) / 255.0);
    let v = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = v - min;
    let s = if v > 0.0 { delta / v } else { 0.0 };
    let mut h = if delta == 0.0 {
        0.0
    } else if v == r {
        60.0 * (g - b) / delta
    } else if v == g {
        120.0 + 60.0 * (b - r) / delta
    } else {
        240.0 + 60.0 * (r - g) / delta
    };
    if h < 0.0 {
        h += 360.0;
    }
    (
        (h / 2.0).round() % 180.0,
        (s * 255.0).round(),
        (v * 255.0).round(),
    )
}

fn hsv_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let triples: Vec<[u8; 3]> = (0..10_000).map(|_| rng.random()).collect();
    let start = Instant::now();
    let mut worst = (0u32, 0u32);
    for &[r, g, b] in &triples {
        let got = rgb_to_hsv(Rgb8::new(r, g, b));
        let (h, s, v) = reference_hsv(r, g, b);
        check(f64::from(got.v) == v, || format!("V mismatch for ({r},{g},{b})"))?;
        let dh = (f64::from(got.h) - h).abs();
        let dh = dh.min(180.0 - dh) as u32;
        let ds = (f64::from(got.s) - s).abs() as u32;
        check(dh <= 1 && ds <= 1, || {
            format!("({r},{g},{b}) -> {got:?}, reference ({h},{s},{v})")
        })?;
        worst = (worst.0.max(dh), worst.1.max(ds));
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!(
        "10000 triples, max |dH|={} |dS|={}, V exact, {elapsed:.2?}",
        worst.0, worst.1
    ))
}

/// Breadth-first flood fill with 8-neighborhood.
fn reference_components(mask: &BitImage) -> Vec<BoundingRect> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for sy in 0..h {
        for sx in 0..w {
            if !*mask.get(sx, sy) || seen[sy * w + sx] {
                continue;
            }
            let mut rect = BoundingRect {
                x_min: sx,
                x_max: sx,
                y_min: sy,
                y_max: sy,
                pixel_count: 0,
            };
            let mut queue = VecDeque::from([(sx, sy)]);
            seen[sy * w + sx] = true;
            while let Some((x, y)) = queue.pop_front() {
                rect.pixel_count += 1;
                rect.x_min = rect.x_min.min(x);
                rect.x_max = rect.x_max.max(x);
                rect.y_min = rect.y_min.min(y);
                rect.y_max = rect.y_max.max(y);
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        if *mask.get(nx, ny) && !seen[ny * w + nx] {
                            seen[ny * w + nx] = true;
                            queue.push_back((nx, ny));
                        }
                    }
                }
            }
            out.push(rect);
        }
    }
    out
}

fn labeling_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let masks: Vec<BitImage> = (0..50)
        .map(|i| {
            let density = 0.1 + 0.8 * (i as f64 / 49.0);
            RasterImage::from_fn(64, 64, |_, _| rng.random_bool(density)).unwrap()
        })
        .collect();
    let start = Instant::now();
    let mut total = 0;
    for (i, mask) in masks.iter().enumerate() {
        let mut got = connected_components(mask);
        let mut want = reference_components(mask);
        got.sort();
        want.sort();
        check(got == want, || {
            format!("mask {i}: {} vs {} components", got.len(), want.len())
        })?;
        total += want.len();
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(5))?;
    Ok(format!("50 masks, {total} components identical, {elapsed:.2?}"))
}

fn gaussian_kernel() -> Outcome {
    // exp(-r^2/2) at r^2 = 0, 1, 2 normalized by 1 + 4e^-0.5 + 4e^-1.
    let k = make_gaussian_kernel(3, 1.0).map_err(|e| e.to_string())?;
    let expected = [(0, 0, 0.2041799556), (1, 0, 0.1238414028), (1, 1, 0.0751136080)];
    for (dx, dy, w) in expected {
        for (sx, sy) in [(1, 1), (-1, 1), (1, -1), (-1, -1)] {
            let got = k.weight(dx * sx, dy * sy);
            check((got - w).abs() < 1e-6, || {
                format!("weight({dx},{dy}) = {got}, expected {w}")
            })?;
            let got = k.weight(dy * sy, dx * sx);
            check((got - w).abs() < 1e-6, || {
                format!("weight({dy},{dx}) = {got}, expected {w}")
            })?;
        }
    }
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for size in (3..=31).step_by(2) {
        for sigma in [0.3, 0.5, 1.0, 1.1, 2.0, 5.0, 20.0] {
            let k = make_gaussian_kernel(size, sigma).map_err(|e| e.to_string())?;
            let sum: f64 = k.weights().iter().sum();
            worst = worst.max((sum - 1.0).abs());
            count += 1;
        }
    }
    check(worst <= 1e-9, || format!("kernel sum off by {worst:e}"))?;
    Ok(format!(
        "3x3 sigma=1 weights within 1e-6; {count} kernels, max |sum-1| = {worst:.1e}"
    ))
}

fn reference_partition(ys: &[usize], mvd: f64) -> Vec<Vec<usize>> {
    let mut sorted = ys.to_vec();
    sorted.sort_unstable();
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, &y) in sorted.iter().enumerate() {
        if i == 0 || (y - sorted[i - 1]) as f64 >= mvd {
            out.push(Vec::new());
        }
        out.last_mut().unwrap().push(y);
    }
    out
}

fn flat_rect(x: usize, y: usize) -> BoundingRect {
    BoundingRect {
        x_min: x,
        x_max: x + 4,
        y_min: y,
        y_max: y,
        pixel_count: 5,
    }
}

fn mvd_grouping() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..200 {
        let n = rng.random_range(0..40);
        let ys: Vec<usize> = (0..n).map(|_| rng.random_range(0..400)).collect();
        let mvd = f64::from(rng.random_range(0u32..80));
        let rects: Vec<_> = ys.iter().enumerate().map(|(i, &y)| flat_rect(i, y)).collect();
        let got: Vec<Vec<usize>> = group_by_mvd(&rects, mvd)
            .into_iter()
            .map(|g| g.members.iter().map(|r| r.y_min).collect())
            .collect();
        let want = reference_partition(&ys, mvd);
        check(got == want, || {
            format!("case {case}: partition differs for mvd {mvd}")
        })?;
    }
    let pair = [flat_rect(0, 100), flat_rect(0, 130)];
    check(group_by_mvd(&pair, 30.0).len() == 2, || {
        "gap == mvd must split".into()
    })?;
    check(group_by_mvd(&pair, 30.5).len() == 1, || {
        "gap < mvd must merge".into()
    })?;
    Ok("200 random multisets match; gap == mvd splits, gap < mvd merges".into())
}

fn clean_fixtures() -> Vec<(RasterImage<Rgb8>, synthgen::FixtureRecord)> {
    synthgen::generate_fixtures(130, 7, &VariationProfile::clean()).expect("clean fixtures")
}

fn clean_end_to_end(
    fixtures: &[(RasterImage<Rgb8>, synthgen::FixtureRecord)],
    gen_time: Duration,
) -> Outcome {
    let start = Instant::now();
    let pipeline = Pipeline::new(AppConfig::default()).map_err(|e| e.to_string())?;
    let mut hits = 0;
    let mut misses = Vec::new();
    for (img, rec) in fixtures {
        match pipeline.decode_image(img, None, AnchorPolicy::Auto) {
            Ok(r) if r.code == rec.code => hits += 1,
            Ok(r) => misses.push(format!("{} -> {}", rec.code, r.code)),
            Err(e) => misses.push(format!("{} -> {e}", rec.code)),
        }
    }
    let elapsed = gen_time + start.elapsed();
    let cut = fixtures.iter().filter(|(_, r)| r.cut.iter().any(|&c| c)).count();
    let bottom = fixtures
        .iter()
        .filter(|(_, r)| r.anchor == SlabAnchor::Bottom)
        .count();
    check(misses.is_empty(), || {
        format!("{hits}/130, misses: {}", misses.join(", "))
    })?;
    check(cut > 0 && bottom > 0 && bottom < fixtures.len(), || {
        "dataset lacks split bands or one anchor".into()
    })?;
    within(elapsed, Duration::from_secs(60))?;
    Ok(format!(
        "130/130 exact; {cut} fixtures with split bands, {bottom} bottom-anchored; {elapsed:.2?}"
    ))
}

fn flip_symmetry(fixtures: &[(RasterImage<Rgb8>, synthgen::FixtureRecord)]) -> Outcome {
    let pipeline = Pipeline::new(AppConfig::default()).map_err(|e| e.to_string())?;
    for (img, rec) in fixtures {
        let flipped = img.flip_vertical();
        let pinned = rec.anchor.policy();
        let reversed: String = rec.code.chars().rev().collect();
        let got = pipeline
            .decode_image(&flipped, None, pinned)
            .map_err(|e| format!("{}: {e}", rec.code))?;
        check(got.code == reversed, || {
            format!("{} mirrored with {pinned} pinned -> {}", rec.code, got.code)
        })?;
        let auto = pipeline
            .decode_image(&flipped, None, AnchorPolicy::Auto)
            .map_err(|e| format!("{}: {e}", rec.code))?;
        check(auto.code == rec.code, || {
            format!("{} mirrored with auto anchor -> {}", rec.code, auto.code)
        })?;
    }
    Ok(format!(
        "{} fixtures: mirrored + original direction pinned reads reversed; auto anchor reads original",
        fixtures.len()
    ))
}

struct NoisyRun {
    config_toml: String,
    train_report: String,
    validation_report: String,
    validation_rate: f64,
    hits: usize,
    images: usize,
    elapsed: Duration,
}

/// Generates the noisy 109/21 dataset on disk, trains from the shipped
/// config and validates the result.
fn noisy_run(dir: &Path) -> Result<NoisyRun, String> {
    let start = Instant::now();
    let e = |err: slabcode_core::Error| err.to_string();
    synthgen::generate_dataset(dir, 130, 109.0 / 130.0, 7, &VariationProfile::weathered()).map_err(e)?;
    let manifest = DatasetManifest::load(&dir.join("manifest.csv")).map_err(e)?;
    let base = AppConfig::default();
    let (trained, train_report) =
        trainer::train_manifest(&base, &manifest, &ParamGrid::default()).map_err(e)?;
    let report = trainer::validate_manifest(&trained, &manifest, Split::Validation).map_err(e)?;
    Ok(NoisyRun {
        config_toml: trained.to_toml_string().map_err(e)?,
        train_report: train_report.to_json(),
        validation_report: report.to_json(),
        validation_rate: report.combined.exact_match_rate,
        hits: report.combined.hits,
        images: report.combined.images,
        elapsed: start.elapsed(),
    })
}

fn noisy_criterion(run: &NoisyRun) -> Outcome {
    let detail = format!(
        "validation exact match {}/{} = {:.4} (floor 0.75), {:.1?}",
        run.hits, run.images, run.validation_rate, run.elapsed
    );
    check(run.images == 21, || {
        format!("validation split has {} images", run.images)
    })?;
    check(run.validation_rate >= 0.75, || detail.clone())?;
    within(run.elapsed, Duration::from_secs(15 * 60))?;
    Ok(detail)
}

fn determinism(a: &NoisyRun, b: &NoisyRun) -> Outcome {
    check(a.config_toml == b.config_toml, || "trained configs differ".into())?;
    check(a.train_report == b.train_report, || {
        "training reports differ".into()
    })?;
    check(a.validation_report == b.validation_report, || {
        "validation reports differ".into()
    })?;
    Ok(format!(
        "configs ({} bytes), training reports and validation reports byte-identical",
        a.config_toml.len()
    ))
}

fn run(name: &str, failures: &mut Vec<String>, f: impl FnOnce() -> Outcome) {
    let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    match outcome {
        Ok(detail) => println!("PASS  {name}: {detail}"),
        Err(detail) => {
            println!("FAIL  {name}: {detail}");
            failures.push(name.to_string());
        }
    }
}

fn main() {
    let mut failures = Vec::new();
    println!("acceptance criteria");
    run(
        "hsv conversion matches double-precision reference",
        &mut failures,
        hsv_oracle,
    );
    run(
        "component labeling matches flood fill",
        &mut failures,
        labeling_oracle,
    );
    run(
        "gaussian kernel weights and normalization",
        &mut failures,
        gaussian_kernel,
    );
    run(
        "mvd grouping matches gap-clustering reference",
        &mut failures,
        mvd_grouping,
    );

    let start = Instant::now();
    let fixtures = clean_fixtures();
    let gen_time = start.elapsed();
    run("clean fixtures decode exactly", &mut failures, || {
        clean_end_to_end(&fixtures, gen_time)
    });
    run("vertical mirror reverses the code", &mut failures, || {
        flip_symmetry(&fixtures)
    });
    drop(fixtures);

    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let first = noisy_run(dirs[0].path());
    run(
        "noisy fixtures: validation exact match after training",
        &mut failures,
        || noisy_criterion(first.as_ref().map_err(Clone::clone)?),
    );
    run("train + validate is deterministic", &mut failures, || {
        let a = first.as_ref().map_err(Clone::clone)?;
        let b = noisy_run(dirs[1].path())?;
        determinism(a, &b)
    });

    if failures.is_empty() {
        println!("all acceptance criteria passed");
    } else {
        println!(
            "{} acceptance criteria failed: {}",
            failures.len(),
            failures.join("; ")
        );
        std::process::exit(1);
    }
}
