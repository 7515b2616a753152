//! Parameter training over a labeled dataset.
//!
//! Each spec row is tuned in config order by [`grid::grid_search_row`] on
//! the training split, with the other rows of its color at their current
//! values. Rows whose color never appears in the training codes are left
//! untouched.

pub mod eval;
pub mod grid;
pub mod manifest;

use serde::{Deserialize, Serialize};

use crate::config::AppConfig;
use crate::decoder::Pipeline;
use crate::error::{Error, Result};

pub use eval::{evaluate_color, evaluate_full, prepare_split, ColorScore, EvalReport, PreparedSample};
pub use grid::{grid_search, AxisRange, Neighborhood, ParamGrid, SearchMode};
pub use manifest::{load_manifest, DatasetManifest, ManifestEntry, Split};

/// What happened to one spec row during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowTraining {
    pub label: String,
    /// `None` when the row was skipped.
    pub mode: Option<SearchMode>,
    pub cardinality: String,
    pub evaluations: u64,
    pub invalid_points: u64,
    pub before: Option<ColorScore>,
    pub after: Option<ColorScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_images: usize,
    pub rows: Vec<RowTraining>,
}

impl TrainReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_table(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "Training on {} images", self.train_images);
        let _ = writeln!(
            out,
            "{:<20} {:<19} {:>22} {:>6} {:>9} {:>9}",
            "row", "mode", "grid points", "evals", "before", "after"
        );
        let rate = |s: &Option<ColorScore>| {
            s.as_ref().map_or_else(
                || "-".to_string(),
                |s| format!("{}/{}", s.image_successes, s.images),
            )
        };
        for r in &self.rows {
            let mode = match (&r.mode, &r.skipped) {
                (Some(SearchMode::Exhaustive), _) => "exhaustive".to_string(),
                (Some(SearchMode::CoordinateDescent), _) => "coordinate-descent".to_string(),
                (None, Some(why)) => format!("skipped: {why}"),
                (None, None) => "skipped".to_string(),
            };
            let _ = writeln!(
                out,
                "{:<20} {:<19} {:>22} {:>6} {:>9} {:>9}",
                r.label,
                mode,
                r.cardinality,
                r.evaluations,
                rate(&r.before),
                rate(&r.after)
            );
        }
        out
    }
}

/// Tunes every spec row of `config` on prepared training samples and returns
/// the updated config. The samples must have been prepared with the same
/// scale factor as `config`.
pub fn train(
    config: &AppConfig,
    samples: &[PreparedSample],
    grid: &ParamGrid,
) -> Result<(AppConfig, TrainReport)> {
    if samples.is_empty() {
        return Err(Error::EmptySplit {
            split: Split::Train.to_string(),
            detail: String::new(),
        });
    }
    grid.validate()?;
    let pipeline = Pipeline::new(config.clone())?;
    let detector = pipeline.detector();
    let mut colors = config.colors.clone();
    let mut rows = Vec::with_capacity(colors.len());

    for i in 0..colors.len() {
        let name = colors[i].name.clone();
        let members: Vec<usize> = (0..colors.len()).filter(|&j| colors[j].name == name).collect();
        let tuned = members
            .iter()
            .position(|&j| j == i)
            .expect("row is a member of its own color");
        let group: Vec<_> = members.iter().map(|&j| colors[j].clone()).collect();
        let label = colors[i].label();

        if samples.iter().all(|s| s.expects(colors[i].digit) == 0) {
            rows.push(RowTraining {
                label,
                mode: None,
                cardinality: grid.cardinality(&colors[i]).to_string(),
                evaluations: 0,
                invalid_points: 0,
                before: None,
                after: None,
                skipped: Some("color absent from training split".into()),
            });
            continue;
        }

        let refs: Vec<_> = group.iter().collect();
        let before = evaluate_color(detector, &refs, samples)?;
        let out = grid::grid_search_row(detector, samples, &group, tuned, grid)?;
        rows.push(RowTraining {
            label,
            mode: Some(out.mode),
            cardinality: out.cardinality.to_string(),
            evaluations: out.evaluations,
            invalid_points: out.invalid_points,
            before: Some(before),
            after: out.best.score,
            skipped: None,
        });
        colors[i] = out.best.spec;
    }

    let trained = AppConfig {
        colors,
        ..config.clone()
    };
    trained.validate()?;
    Ok((
        trained,
        TrainReport {
            train_images: samples.len(),
            rows,
        },
    ))
}

/// Loads the training split of `manifest` and runs [`train`].
pub fn train_manifest(
    config: &AppConfig,
    manifest: &DatasetManifest,
    grid: &ParamGrid,
) -> Result<(AppConfig, TrainReport)> {
    let pipeline = Pipeline::new(config.clone())?;
    let samples = prepare_split(&pipeline, manifest, Split::Train)?;
    train(config, &samples, grid)
}

/// Per-color and exact-match report for one split of `manifest`.
pub fn validate_manifest(config: &AppConfig, manifest: &DatasetManifest, split: Split) -> Result<EvalReport> {
    let pipeline = Pipeline::new(config.clone())?;
    let samples = prepare_split(&pipeline, manifest, split)?;
    evaluate_full(&pipeline, &config.colors, &samples, split)
}
