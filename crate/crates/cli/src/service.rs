//! Review API used by the browser tool.
//!
//! | Method | Path               | Body                                   |
//! |--------|--------------------|----------------------------------------|
//! | POST   | `/api/decode`      | multipart: `image`, optional `crop`, `anchor` |
//! | POST   | `/api/corrections` | JSON [`CorrectionRecord`]               |
//! | GET    | `/api/config`      |                                        |
//! | GET    | `/healthz`         |                                        |
//!
//! All coordinates in responses are original image pixels. Corrections are
//! appended to a manifest-compatible CSV with two extra columns,
//! `machine_code` and `timestamp`.

use std::fs::OpenOptions;
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Multipart, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use slabcode_core::banddetect::MaskCount;
use slabcode_core::decoder::ImageRect;
use slabcode_core::trainer::manifest::{csv_line_with, validate_code, MANIFEST_HEADER};
use slabcode_core::trainer::{ManifestEntry, Split};
use slabcode_core::{imageio, AnchorPolicy, AppConfig, CropRect, DecodeResult, Error, Pipeline};
use tokio::sync::Mutex;
use tower_http::cors::CorsLayer;

use crate::args::parse_crop;
use crate::records::BandRecord;

pub const DEFAULT_CORRECTIONS_FILE: &str = "corrections.csv";
pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 20 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    pub corrections_file: PathBuf,
    pub max_upload_bytes: usize,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self {
            corrections_file: PathBuf::from(DEFAULT_CORRECTIONS_FILE),
            max_upload_bytes: DEFAULT_MAX_UPLOAD_BYTES,
        }
    }
}

pub struct AppState {
    pipeline: Pipeline,
    corrections_file: PathBuf,
    /// Serializes appends to the corrections file.
    writer: Mutex<()>,
}

/// Builds the application router.
pub fn router(config: AppConfig, options: ServiceOptions) -> anyhow::Result<Router> {
    let state = Arc::new(AppState {
        pipeline: Pipeline::new(config)?,
        corrections_file: options.corrections_file,
        writer: Mutex::new(()),
    });
    Ok(Router::new()
        .route("/api/decode", post(decode))
        .route("/api/corrections", post(corrections))
        .route("/api/config", get(config_legend))
        .route("/healthz", get(healthz))
        .layer(DefaultBodyLimit::max(options.max_upload_bytes))
        .layer(CorsLayer::permissive())
        .with_state(state))
}

/// Serves on an already bound listener until the task is cancelled.
pub async fn serve_listener(listener: tokio::net::TcpListener, app: Router) -> anyhow::Result<()> {
    axum::serve(listener, app).await.context("serving HTTP")
}

pub async fn serve(addr: SocketAddr, config: AppConfig, options: ServiceOptions) -> anyhow::Result<()> {
    let app = router(config, options)?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    serve_listener(listener, app).await
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    #[derive(Serialize)]
    struct Body {
        error: String,
    }
    (
        status,
        Json(Body {
            error: message.into(),
        }),
    )
        .into_response()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectResponse {
    pub code: String,
    pub direction: String,
    pub image: ImageSize,
    pub bands: Vec<BandRecord>,
    pub mask_counts: Vec<MaskCount>,
    pub warnings: Vec<String>,
}

impl DetectResponse {
    fn new(result: &DecodeResult) -> Self {
        let frame = result.frame.expect("pipeline results carry their frame");
        Self {
            code: result.code.clone(),
            direction: result.direction.as_str().to_string(),
            image: ImageSize {
                width: frame.original_width,
                height: frame.original_height,
            },
            bands: result
                .bands
                .iter()
                .map(|b| BandRecord::new(b, &frame, true))
                .collect(),
            mask_counts: result.mask_counts.clone(),
            warnings: result.warnings.clone(),
        }
    }
}

/// Body of a 422 from `/api/decode`.
#[derive(Debug, Clone, Serialize)]
pub struct NoBandsResponse {
    pub error: String,
    pub code: Option<String>,
    pub bands: Vec<BandRecord>,
    pub mask_counts: Vec<MaskCount>,
    pub warnings: Vec<String>,
}

async fn decode(State(state): State<Arc<AppState>>, mut multipart: Multipart) -> Response {
    let mut image = None;
    let mut crop: Option<CropRect> = None;
    let mut anchor = state.pipeline.config().anchor;
    loop {
        let field = match multipart.next_field().await {
            Ok(Some(field)) => field,
            Ok(None) => break,
            Err(e) => return error(e.status(), e.body_text()),
        };
        let name = field.name().unwrap_or_default().to_string();
        let bytes = match field.bytes().await {
            Ok(b) => b,
            Err(e) => return error(e.status(), e.body_text()),
        };
        match name.as_str() {
            "image" => image = Some(bytes),
            "crop" | "anchor" => {
                let Ok(text) = std::str::from_utf8(&bytes) else {
                    return error(StatusCode::BAD_REQUEST, format!("field `{name}` is not text"));
                };
                let text = text.trim();
                if name == "crop" {
                    if !text.is_empty() {
                        match parse_crop(text) {
                            Ok(c) => crop = Some(c),
                            Err(msg) => return error(StatusCode::BAD_REQUEST, msg),
                        }
                    }
                } else {
                    match text.parse::<AnchorPolicy>() {
                        Ok(a) => anchor = a,
                        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
                    }
                }
            }
            _ => {}
        }
    }
    let Some(image) = image else {
        return error(StatusCode::BAD_REQUEST, "missing `image` field");
    };

    let worker = tokio::task::spawn_blocking(move || {
        let rgb = imageio::decode_bytes(&image)?;
        state.pipeline.decode_image(&rgb, crop, anchor)
    });
    match worker.await {
        Ok(Ok(result)) => (StatusCode::OK, Json(DetectResponse::new(&result))).into_response(),
        Ok(Err(Error::NoBands(report))) => (
            StatusCode::UNPROCESSABLE_ENTITY,
            Json(NoBandsResponse {
                error: "no bands detected".into(),
                code: None,
                bands: Vec::new(),
                mask_counts: report.mask_counts,
                warnings: report.warnings,
            }),
        )
            .into_response(),
        Ok(Err(e @ Error::Image { .. })) => error(StatusCode::BAD_REQUEST, format!("undecodable image: {e}")),
        Ok(Err(e @ (Error::Bounds(_) | Error::Parameter(_) | Error::Dimension(_)))) => {
            error(StatusCode::BAD_REQUEST, e.to_string())
        }
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(
            StatusCode::INTERNAL_SERVER_ERROR,
            format!("decode task failed: {e}"),
        ),
    }
}

/// A human-confirmed code for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectionRecord {
    /// Image path as it should appear in the manifest.
    pub image: String,
    /// What the decoder produced; empty when it found nothing.
    #[serde(default)]
    pub machine_code: String,
    pub confirmed_code: String,
    #[serde(default)]
    pub crop: Option<CropRect>,
    #[serde(default)]
    pub anchor: Option<AnchorPolicy>,
    /// RFC 3339; the server's clock when omitted.
    #[serde(default)]
    pub timestamp: Option<String>,
}

impl CorrectionRecord {
    fn entry(&self) -> Result<ManifestEntry, String> {
        if self.image.trim().is_empty() {
            return Err("image reference is empty".into());
        }
        validate_code(&self.confirmed_code).map_err(|e| format!("confirmed_code: {e}"))?;
        if !self.machine_code.is_empty() {
            validate_code(&self.machine_code).map_err(|e| format!("machine_code: {e}"))?;
        }
        Ok(ManifestEntry {
            path: PathBuf::from(self.image.trim()),
            code: self.confirmed_code.clone(),
            crop: self.crop,
            anchor: self.anchor.unwrap_or_default(),
            split: Split::Train,
        })
    }
}

pub fn corrections_header() -> String {
    format!("{},machine_code,timestamp\n", MANIFEST_HEADER.join(","))
}

#[derive(Debug, Clone, Serialize)]
struct Appended {
    row: String,
}

async fn corrections(
    State(state): State<Arc<AppState>>,
    payload: Result<Json<CorrectionRecord>, JsonRejection>,
) -> Response {
    let record = match payload {
        Ok(Json(r)) => r,
        Err(rejection) => return error(rejection.status(), rejection.body_text()),
    };
    let entry = match record.entry() {
        Ok(e) => e,
        Err(msg) => return error(StatusCode::UNPROCESSABLE_ENTITY, msg),
    };
    let timestamp = record
        .timestamp
        .clone()
        .unwrap_or_else(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    let row = csv_line_with(&entry, &[&record.machine_code, &timestamp]);

    let _guard = state.writer.lock().await;
    let path = &state.corrections_file;
    let written = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .and_then(|mut file| {
            if file.metadata()?.len() == 0 {
                file.write_all(corrections_header().as_bytes())?;
            }
            file.write_all(row.as_bytes())?;
            file.flush()
        });
    match written {
        Ok(()) => (StatusCode::CREATED, Json(Appended { row })).into_response(),
        Err(e) => error(
            StatusCode::INTERNAL_SERVER_ERROR,
            format!("cannot write {}: {e}", path.display()),
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegendEntry {
    pub name: String,
    pub digit: u8,
    pub swatch: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigResponse {
    pub scale_factor: f64,
    pub anchor: AnchorPolicy,
    /// One entry per color, ordered by digit.
    pub colors: Vec<LegendEntry>,
}

async fn config_legend(State(state): State<Arc<AppState>>) -> Json<ConfigResponse> {
    let config = state.pipeline.config();
    let mut colors: Vec<LegendEntry> = Vec::new();
    for spec in &config.colors {
        if colors.iter().any(|c| c.name == spec.name) {
            continue;
        }
        colors.push(LegendEntry {
            name: spec.name.clone(),
            digit: spec.digit,
            swatch: spec.swatch.clone(),
        });
    }
    colors.sort_by_key(|c| c.digit);
    Json(ConfigResponse {
        scale_factor: config.scale_factor,
        anchor: config.anchor,
        colors,
    })
}

async fn healthz() -> &'static str {
    "ok"
}

/// Rect inflated by `margin` pixels on every side, clipped to the image.
pub fn inflate(rect: ImageRect, margin: usize, width: usize, height: usize) -> CropRect {
    let x0 = rect.x.saturating_sub(margin);
    let y0 = rect.y.saturating_sub(margin);
    let x1 = (rect.x + rect.w + margin).min(width);
    let y1 = (rect.y + rect.h + margin).min(height);
    CropRect::new(x0, y0, x1 - x0, y1 - y0)
}
