use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::sync::OnceLock;

use serde_json::Value;
use slabcode_core::synthgen::{generate_slab, SynthParams};
use slabcode_core::trainer::ParamGrid;
use slabcode_core::{imageio, AppConfig, RasterImage, Rgb8};

fn slabcode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slabcode"))
        .args(args)
        .output()
        .expect("spawn slabcode")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn arg(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn write_fixture(dir: &Path, name: &str, code: &str) -> PathBuf {
    let (img, _) = generate_slab(code, &SynthParams::default()).unwrap();
    let path = dir.join(name);
    imageio::save_image(&img, &path).unwrap();
    path
}

/// The 130-fixture clean set for seed 7, generated once per test run.
fn clean_set() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli-clean-7");
        let _ = std::fs::remove_dir_all(&dir);
        let out = slabcode(&["generate", "--n", "130", "--seed", "7", "--out-dir", arg(&dir)]);
        assert!(out.status.success(), "{}", text(&out.stderr));
        dir
    })
}

fn color_rates(report: &Value) -> Vec<(String, f64)> {
    report["colors"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| !c["image_rate"].is_null())
        .map(|c| {
            (
                c["color"].as_str().unwrap().to_string(),
                c["image_rate"].as_f64().unwrap(),
            )
        })
        .collect()
}

#[test]
fn decode_prints_code_and_direction() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_fixture(dir.path(), "slab.png", "23457");
    let out = slabcode(&["decode", arg(&path)]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert_eq!(text(&out.stdout), "code=23457 direction=down\n");
}

#[test]
fn decode_json_lines_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_fixture(dir.path(), "a.png", "23457");
    let b = write_fixture(dir.path(), "b.png", "61");
    let run = |name: &str| {
        let json = dir.path().join(name);
        let out = slabcode(&["decode", arg(&a), arg(&b), "--json-out", arg(&json)]);
        assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
        std::fs::read_to_string(json).unwrap()
    };
    let first = run("one.jsonl");
    assert_eq!(first, run("two.jsonl"));

    let lines: Vec<Value> = first.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    let a_line = first.lines().next().unwrap();
    assert!(a_line.starts_with(&format!(
        "{{\"path\":\"{}\",\"code\":\"23457\",\"direction\":\"down\",\"bands\":[",
        arg(&a)
    )));
    assert!(a_line.ends_with(",\"warnings\":[]}"), "{a_line}");
    assert_eq!(lines[0]["code"], "23457");
    assert_eq!(lines[1]["code"], "61");
    let bands = lines[0]["bands"].as_array().unwrap();
    assert_eq!(bands.len(), 5);
    let colors: Vec<&str> = bands.iter().map(|b| b["color"].as_str().unwrap()).collect();
    assert_eq!(colors, ["red", "orange", "yellow", "green", "purple"]);
    // Reading order is top to bottom for this fixture.
    let ys: Vec<f64> = bands.iter().map(|b| b["y"].as_f64().unwrap()).collect();
    assert!(ys.windows(2).all(|w| w[0] < w[1]), "{ys:?}");
    // The first band is painted over rows 160..260.
    assert!((ys[0] - 209.5).abs() < 8.0, "{ys:?}");
    let rect = &bands[0]["rect"];
    assert!(
        rect["x"].as_u64().unwrap() <= 100 && rect["w"].as_u64().unwrap() >= 480,
        "{rect}"
    );
}

#[test]
fn decode_json_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_fixture(dir.path(), "slab.png", "7");
    let out = slabcode(&["decode", arg(&path), "--json-out", "-"]);
    assert_eq!(out.status.code(), Some(0));
    let record: Value = serde_json::from_str(text(&out.stdout).trim()).unwrap();
    assert_eq!(record["code"], "7");
    assert_eq!(record["direction"], "down");
}

#[test]
fn blank_image_exits_with_no_bands() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("blank.png");
    let img = RasterImage::filled(400, 400, Rgb8::new(200, 200, 200)).unwrap();
    imageio::save_image(&img, &path).unwrap();
    let json = dir.path().join("out.jsonl");
    let out = slabcode(&["decode", arg(&path), "--json-out", arg(&json)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("no bands detected"));
    let record: Value = serde_json::from_str(std::fs::read_to_string(json).unwrap().trim()).unwrap();
    assert!(record["code"].is_null());
    assert_eq!(record["bands"].as_array().unwrap().len(), 0);
}

#[test]
fn bad_crop_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_fixture(dir.path(), "slab.png", "23457");
    let out = slabcode(&["decode", arg(&path), "--crop", "600,100,200,100"]);
    assert_eq!(out.status.code(), Some(1));
    let err = text(&out.stderr);
    assert!(err.contains("out of bounds"), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn crop_in_original_pixels_keeps_the_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_fixture(dir.path(), "slab.png", "23457");
    let out = slabcode(&["decode", arg(&path), "--crop", "40,100,620,2500"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert_eq!(text(&out.stdout), "code=23457 direction=down\n");
}

#[test]
fn unreadable_image_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.png");
    let out = slabcode(&["decode", arg(&missing)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("missing.png"));

    let junk = dir.path().join("junk.png");
    std::fs::write(&junk, b"not an image").unwrap();
    assert_eq!(slabcode(&["decode", arg(&junk)]).status.code(), Some(1));
}

#[test]
fn generate_writes_a_complete_dataset() {
    let dir = clean_set();
    let pngs = std::fs::read_dir(dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count();
    assert_eq!(pngs, 130);
    let manifest = std::fs::read_to_string(dir.join("manifest.csv")).unwrap();
    assert!(manifest.starts_with("path,code,crop_x,crop_y,crop_w,crop_h,anchor,split\n"));
    assert_eq!(manifest.lines().count(), 131);
    assert_eq!(manifest.lines().filter(|l| l.ends_with(",train")).count(), 109);
}

#[test]
fn generate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let listing = |dir: &Path| {
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (
                    p.file_name().unwrap().to_string_lossy().into_owned(),
                    std::fs::read(&p).unwrap(),
                )
            })
            .collect();
        files.sort();
        files
    };
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let dir = tmp.path().join(name);
        let out = slabcode(&[
            "generate",
            "--n",
            "12",
            "--seed",
            "7",
            "--profile",
            "weathered",
            "--out-dir",
            arg(&dir),
        ]);
        assert!(out.status.success(), "{}", text(&out.stderr));
        runs.push(listing(&dir));
    }
    assert_eq!(runs[0].len(), 14);
    assert!(runs[0] == runs[1], "two runs with the same seed differ");
}

#[test]
fn unknown_profile_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = slabcode(&[
        "generate",
        "--n",
        "2",
        "--profile",
        "sandblasted",
        "--out-dir",
        arg(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn validate_clean_fixtures_with_shipped_config() {
    let dir = clean_set();
    let manifest = dir.join("manifest.csv");
    for split in ["train", "validation"] {
        let report_path = dir.join(format!("report-{split}.json"));
        let out = slabcode(&[
            "validate",
            arg(&manifest),
            "--split",
            split,
            "--report-out",
            arg(&report_path),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
        let table = text(&out.stdout);
        assert!(table.contains("black") && table.contains("purple"), "{table}");
        let report: Value = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
        let rates = color_rates(&report);
        assert!(!rates.is_empty());
        for (color, rate) in rates {
            assert_eq!(rate, 1.0, "{split} {color}");
        }
        assert_eq!(report["combined"]["exact_match_rate"].as_f64(), Some(1.0));
    }
}

#[test]
fn train_reaches_its_own_training_split() {
    let dir = clean_set();
    let tmp = tempfile::tempdir().unwrap();
    let manifest = dir.join("manifest.csv");
    let trained = tmp.path().join("trained.toml");
    let train_report = tmp.path().join("train.json");
    let out = slabcode(&[
        "train",
        arg(&manifest),
        "--out",
        arg(&trained),
        "--report-out",
        arg(&train_report),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    AppConfig::load(&trained).expect("trained config loads");
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&train_report).unwrap()).unwrap();
    assert_eq!(report["train_images"], 109);

    let eval = tmp.path().join("eval.json");
    let out = slabcode(&[
        "validate",
        arg(&manifest),
        "--config",
        arg(&trained),
        "--split",
        "train",
        "--report-out",
        arg(&eval),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let eval: Value = serde_json::from_str(&std::fs::read_to_string(&eval).unwrap()).unwrap();
    let rate = eval["combined"]["exact_match_rate"].as_f64().unwrap();
    assert!(rate >= 0.95, "training split exact match {rate}");
}

#[test]
fn empty_split_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    write_fixture(tmp.path(), "a.png", "12");
    let manifest = tmp.path().join("manifest.csv");
    std::fs::write(
        &manifest,
        "path,code,crop_x,crop_y,crop_w,crop_h,anchor,split\na.png,12,,,,,auto,validation\n",
    )
    .unwrap();
    let out = slabcode(&["train", arg(&manifest), "--out", arg(&tmp.path().join("t.toml"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("train"));
    assert!(!tmp.path().join("t.toml").exists());
    let out = slabcode(&["validate", arg(&manifest), "--split", "train"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn malformed_manifest_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    write_fixture(tmp.path(), "a.png", "12");
    let manifest = tmp.path().join("manifest.csv");
    std::fs::write(
        &manifest,
        "path,code,crop_x,crop_y,crop_w,crop_h,anchor,split\na.png,1x2,,,,,auto,train\n",
    )
    .unwrap();
    let out = slabcode(&["validate", arg(&manifest)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        text(&out.stderr).contains("manifest.csv:2"),
        "{}",
        text(&out.stderr)
    );
}

#[test]
fn shipped_config_file_matches_builtin_table() {
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    assert_eq!(AppConfig::load(&shipped).unwrap(), AppConfig::default());

    let out = slabcode(&["config"]);
    assert!(out.status.success());
    assert_eq!(
        AppConfig::from_toml_str(&text(&out.stdout)).unwrap(),
        AppConfig::default()
    );

    let out = slabcode(&["config", "--config", arg(&shipped)]);
    assert_eq!(text(&out.stdout), std::fs::read_to_string(&shipped).unwrap());

    let grid = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/grid.toml");
    let grid = ParamGrid::from_toml_str(&std::fs::read_to_string(grid).unwrap()).unwrap();
    assert_eq!(grid, ParamGrid::default());
}

#[test]
fn bad_config_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("c.toml");
    std::fs::write(&config, "version = 1\nscale_factor = 0.15\ncolours = []\n").unwrap();
    let path = write_fixture(tmp.path(), "slab.png", "1");
    let out = slabcode(&["decode", arg(&path), "--config", arg(&config)]);
    assert_eq!(out.status.code(), Some(1));
}

struct Server(std::process::Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn serve_answers_healthz() {
    let tmp = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_slabcode"))
        .args([
            "serve",
            "--port",
            "0",
            "--corrections-file",
            arg(&tmp.path().join("c.csv")),
        ])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let stderr = child.stderr.take().unwrap();
    let _server = Server(child);
    let mut line = String::new();
    BufReader::new(stderr).read_line(&mut line).unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on http://")
        .unwrap_or_else(|| panic!("unexpected banner {line:?}"));

    let mut stream = TcpStream::connect(addr).unwrap();
    write!(
        stream,
        "GET /healthz HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n"
    )
    .unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.ends_with("ok"), "{response}");
}

#[test]
fn serve_reports_bind_errors() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port().to_string();
    let out = slabcode(&["serve", "--port", &port]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("binding"), "{}", text(&out.stderr));
}
