//! Grid search over one color spec row.
//!
//! The geometric parameters (CA, CR, WHR, MVD) come from absolute axes. The
//! HSV bounds are searched in a neighborhood around the starting row's own
//! bounds, clamped to the valid range. Grids at or below the budget are
//! searched exhaustively; larger ones by coordinate descent (each axis in
//! turn, everything else held, for a fixed number of sweeps).
//!
//! The winner maximizes image successes, then minimizes false-positive
//! bands, then HSV volume, then the parameter vector in lexicographic
//! order. That is a total order, so the parallel reduction does not depend
//! on scheduling.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banddetect::{ColorSpec, Detector, MaskRegions};
use crate::error::{Error, Result};
use crate::segmentation::HsvRange;
use crate::trainer::eval::{row_regions, score_regions, ColorScore, PreparedSample};

/// Inclusive `min..=max` sampled every `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisRange {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl AxisRange {
    pub const fn new(min: f64, max: f64, step: f64) -> Self {
        Self { min, max, step }
    }

    pub fn fixed(value: f64) -> Self {
        Self::new(value, value, 1.0)
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.step.is_finite()) {
            return Err(Error::Parameter(format!("{name} axis has non-finite bounds")));
        }
        if self.min > self.max {
            return Err(Error::Parameter(format!(
                "{name} axis min {} exceeds max {}",
                self.min, self.max
            )));
        }
        if self.step <= 0.0 {
            return Err(Error::Parameter(format!("{name} axis step must be positive")));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|i| ((self.min + i as f64 * self.step) * 1e9).round() / 1e9)
            .collect()
    }
}

/// Offsets `-radius..=radius` every `step` around a starting bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Neighborhood {
    pub radius: u8,
    pub step: u8,
}

impl Neighborhood {
    pub const fn new(radius: u8, step: u8) -> Self {
        Self { radius, step }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.step == 0 {
            return Err(Error::Parameter(format!(
                "{name} neighborhood step must be positive"
            )));
        }
        Ok(())
    }

    /// Candidate bounds around `center`, clamped to `0..=limit`, ascending
    /// and without duplicates.
    pub fn values(&self, center: u8, limit: u8) -> Vec<f64> {
        let r = i32::from(self.radius);
        let mut out: Vec<i32> = (-r..=r)
            .step_by(usize::from(self.step))
            .map(|d| (i32::from(center) + d).clamp(0, i32::from(limit)))
            .collect();
        out.sort_unstable();
        out.dedup();
        out.into_iter().map(f64::from).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    Exhaustive,
    CoordinateDescent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamGrid {
    pub ca: AxisRange,
    pub cr: AxisRange,
    pub whr: AxisRange,
    pub mvd: AxisRange,
    pub hue: Neighborhood,
    pub sat: Neighborhood,
    pub val: Neighborhood,
    /// Largest cross-product searched exhaustively.
    pub budget: u64,
    /// Coordinate-descent passes over all axes.
    pub sweeps: u32,
    /// Leave bounds that sit at the end of their scale (no limit) out of the
    /// search.
    #[serde(default = "default_true")]
    pub pin_open_bounds: bool,
}

fn default_true() -> bool {
    true
}

impl Default for ParamGrid {
    fn default() -> Self {
        Self {
            ca: AxisRange::new(0.0, 500.0, 50.0),
            cr: AxisRange::new(0.0, 0.02, 0.01),
            whr: AxisRange::new(0.0, 2.0, 0.1),
            mvd: AxisRange::new(0.0, 80.0, 2.0),
            hue: Neighborhood::new(4, 1),
            sat: Neighborhood::new(32, 8),
            val: Neighborhood::new(32, 8),
            budget: 20_000,
            sweeps: 2,
            pin_open_bounds: true,
        }
    }
}

impl ParamGrid {
    pub fn validate(&self) -> Result<()> {
        self.ca.validate("ca")?;
        self.cr.validate("cr")?;
        self.whr.validate("whr")?;
        self.mvd.validate("mvd")?;
        self.hue.validate("hue")?;
        self.sat.validate("sat")?;
        self.val.validate("val")?;
        if self.sweeps == 0 {
            return Err(Error::Parameter("sweeps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let grid: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Search axes for `spec`, in parameter-vector order.
    pub fn axes(&self, spec: &ColorSpec) -> Vec<(Axis, Vec<f64>)> {
        let mut axes = vec![
            (Axis::Ca, self.ca.values()),
            (Axis::Cr, self.cr.values()),
            (Axis::Whr, self.whr.values()),
            (Axis::Mvd, self.mvd.values()),
        ];
        for (i, r) in spec.ranges.iter().enumerate() {
            for bound in Bound::ALL {
                let (nb, limit) = match bound {
                    Bound::HMin | Bound::HMax => (self.hue, 179),
                    Bound::SMin | Bound::SMax => (self.sat, 255),
                    Bound::VMin | Bound::VMax => (self.val, 255),
                };
                let value = bound.get(r);
                let values = if self.pin_open_bounds && bound.is_open(r, value, limit) {
                    vec![f64::from(value)]
                } else {
                    nb.values(value, limit)
                };
                axes.push((Axis::Hsv(i, bound), values));
            }
        }
        axes
    }

    /// Size of the full cross-product for `spec`, saturating.
    pub fn cardinality(&self, spec: &ColorSpec) -> u128 {
        self.axes(spec)
            .iter()
            .fold(1u128, |acc, (_, v)| acc.saturating_mul(v.len() as u128))
    }

    pub fn mode(&self, spec: &ColorSpec) -> SearchMode {
        if self.cardinality(spec) <= u128::from(self.budget) {
            SearchMode::Exhaustive
        } else {
            SearchMode::CoordinateDescent
        }
    }

    /// Number of points the search will evaluate for `spec`.
    pub fn planned_evaluations(&self, spec: &ColorSpec) -> u64 {
        match self.mode(spec) {
            SearchMode::Exhaustive => self.cardinality(spec) as u64,
            SearchMode::CoordinateDescent => {
                let per_sweep: usize = self.axes(spec).iter().map(|(_, v)| v.len()).sum();
                per_sweep as u64 * u64::from(self.sweeps)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    HMin,
    HMax,
    SMin,
    SMax,
    VMin,
    VMax,
}

impl Bound {
    pub const ALL: [Bound; 6] = [
        Bound::HMin,
        Bound::HMax,
        Bound::SMin,
        Bound::SMax,
        Bound::VMin,
        Bound::VMax,
    ];

    fn get(self, r: &HsvRange) -> u8 {
        match self {
            Bound::HMin => r.h_min,
            Bound::HMax => r.h_max,
            Bound::SMin => r.s_min,
            Bound::SMax => r.s_max,
            Bound::VMin => r.v_min,
            Bound::VMax => r.v_max,
        }
    }

    /// A lower bound at 0 or an upper bound at the scale limit; a hue span
    /// covering the whole circle is open at both ends.
    fn is_open(self, r: &HsvRange, value: u8, limit: u8) -> bool {
        match self {
            Bound::HMin | Bound::HMax => r.h_min == 0 && r.h_max == limit,
            Bound::SMin | Bound::VMin => value == 0,
            Bound::SMax | Bound::VMax => value == limit,
        }
    }

    fn set(self, r: &mut HsvRange, v: u8) {
        match self {
            Bound::HMin => r.h_min = v,
            Bound::HMax => r.h_max = v,
            Bound::SMin => r.s_min = v,
            Bound::SMax => r.s_max = v,
            Bound::VMin => r.v_min = v,
            Bound::VMax => r.v_max = v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Ca,
    Cr,
    Whr,
    Mvd,
    /// Bound of the n-th HSV range.
    Hsv(usize, Bound),
}

impl Axis {
    pub fn apply(self, spec: &mut ColorSpec, value: f64) {
        match self {
            Axis::Ca => spec.ca = value.round() as u64,
            Axis::Cr => spec.cr = value,
            Axis::Whr => spec.whr = value,
            Axis::Mvd => spec.mvd = value,
            Axis::Hsv(i, b) => b.set(&mut spec.ranges[i], value as u8),
        }
    }
}

/// `[ca, cr, whr, mvd, h_min, h_max, s_min, s_max, v_min, v_max, ...]`.
pub fn param_vector(spec: &ColorSpec) -> Vec<f64> {
    let mut v = vec![spec.ca as f64, spec.cr, spec.whr, spec.mvd];
    for r in &spec.ranges {
        v.extend(Bound::ALL.iter().map(|b| f64::from(b.get(r))));
    }
    v
}

/// A scored grid point. `score` is `None` for points with an invalid spec
/// (e.g. a bound pair with min > max); those rank below every valid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub spec: ColorSpec,
    pub score: Option<ColorScore>,
}

impl Candidate {
    /// `Greater` means `self` is the better point.
    pub fn rank(&self, other: &Self) -> Ordering {
        match (&self.score, &other.score) {
            (None, None) => Ordering::Equal,
            (Some(_), None) => Ordering::Greater,
            (None, Some(_)) => Ordering::Less,
            (Some(a), Some(b)) => a
                .image_successes
                .cmp(&b.image_successes)
                .then_with(|| b.false_positive_bands.cmp(&a.false_positive_bands))
                .then_with(|| other.spec.hsv_volume().cmp(&self.spec.hsv_volume())),
        }
        .then_with(|| {
            let (a, b) = (param_vector(&self.spec), param_vector(&other.spec));
            for (x, y) in a.iter().zip(&b) {
                match y.total_cmp(x) {
                    Ordering::Equal => continue,
                    ord => return ord,
                }
            }
            b.len().cmp(&a.len())
        })
    }
}

/// Highest-ranked candidate; independent of input order.
pub fn best_candidate(candidates: Vec<Candidate>) -> Option<Candidate> {
    candidates
        .into_par_iter()
        .reduce_with(|a, b| if b.rank(&a) == Ordering::Greater { b } else { a })
}

/// Scores grid points for one row while its partner rows stay fixed.
/// Regions are computed once per distinct HSV range set.
pub struct RowEvaluator<'a> {
    detector: &'a Detector,
    samples: &'a [PreparedSample],
    /// Every row of the color, with the tuned one at `tuned`.
    rows: Vec<ColorSpec>,
    tuned: usize,
    partner_regions: Vec<Option<Vec<MaskRegions>>>,
    cache: HashMap<Vec<HsvRange>, Vec<MaskRegions>>,
    evaluations: AtomicU64,
    invalid: AtomicU64,
}

impl<'a> RowEvaluator<'a> {
    pub fn new(
        detector: &'a Detector,
        samples: &'a [PreparedSample],
        rows: Vec<ColorSpec>,
        tuned: usize,
    ) -> Result<Self> {
        let mut partner_regions = Vec::with_capacity(rows.len());
        for (i, spec) in rows.iter().enumerate() {
            partner_regions.push(if i == tuned {
                None
            } else {
                Some(row_regions(detector, &[spec], samples)?.remove(0))
            });
        }
        Ok(Self {
            detector,
            samples,
            rows,
            tuned,
            partner_regions,
            cache: HashMap::new(),
            evaluations: AtomicU64::new(0),
            invalid: AtomicU64::new(0),
        })
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(AtomicOrdering::Relaxed)
    }

    pub fn invalid_points(&self) -> u64 {
        self.invalid.load(AtomicOrdering::Relaxed)
    }

    /// Scores `specs` as replacements for the tuned row.
    pub fn evaluate(&mut self, specs: Vec<ColorSpec>) -> Result<Vec<Candidate>> {
        let mut missing: Vec<&Vec<HsvRange>> = Vec::new();
        for s in &specs {
            if s.validate().is_ok() && !self.cache.contains_key(&s.ranges) && !missing.contains(&&s.ranges) {
                missing.push(&s.ranges);
            }
        }
        let computed: Vec<(Vec<HsvRange>, Vec<MaskRegions>)> = missing
            .into_iter()
            .map(|ranges| {
                let regions = self
                    .samples
                    .par_iter()
                    .map(|s| self.detector.regions(&s.image.hsv, ranges))
                    .collect::<Result<Vec<_>>>()?;
                Ok((ranges.clone(), regions))
            })
            .collect::<Result<_>>()?;
        self.cache.extend(computed);

        let this = &*self;
        Ok(specs
            .into_par_iter()
            .map(|spec| {
                this.evaluations.fetch_add(1, AtomicOrdering::Relaxed);
                if spec.validate().is_err() {
                    this.invalid.fetch_add(1, AtomicOrdering::Relaxed);
                    return Candidate { spec, score: None };
                }
                let score = this.score(&spec);
                Candidate {
                    spec,
                    score: Some(score),
                }
            })
            .collect())
    }

    fn score(&self, spec: &ColorSpec) -> ColorScore {
        let mut rows: Vec<&ColorSpec> = Vec::with_capacity(self.rows.len());
        let mut regions: Vec<&[MaskRegions]> = Vec::with_capacity(self.rows.len());
        for (i, row) in self.rows.iter().enumerate() {
            if i == self.tuned {
                rows.push(spec);
                regions.push(&self.cache[&spec.ranges]);
            } else {
                rows.push(row);
                regions.push(self.partner_regions[i].as_deref().expect("partner regions"));
            }
        }
        score_regions(&rows, &regions, self.samples)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: Candidate,
    pub mode: SearchMode,
    pub cardinality: u128,
    pub evaluations: u64,
    pub invalid_points: u64,
}

/// Searches `grid` for the best replacement of `rows[tuned]`, holding the
/// other rows of the same color fixed.
pub fn grid_search_row(
    detector: &Detector,
    samples: &[PreparedSample],
    rows: &[ColorSpec],
    tuned: usize,
    grid: &ParamGrid,
) -> Result<SearchOutcome> {
    grid.validate()?;
    let initial = rows
        .get(tuned)
        .ok_or_else(|| Error::Parameter(format!("row index {tuned} out of range")))?;
    if samples.iter().all(|s| s.expects(initial.digit) == 0) {
        return Err(Error::EmptySplit {
            split: "train".into(),
            detail: format!(" for color `{}`", initial.name),
        });
    }
    let axes = grid.axes(initial);
    if axes.iter().any(|(_, v)| v.is_empty()) {
        return Err(Error::Parameter("grid has an empty axis".into()));
    }
    let cardinality = grid.cardinality(initial);
    let mode = grid.mode(initial);
    let mut eval = RowEvaluator::new(detector, samples, rows.to_vec(), tuned)?;

    let best = match mode {
        SearchMode::Exhaustive => {
            let mut points = vec![initial.clone()];
            for (axis, values) in &axes {
                points = points
                    .iter()
                    .flat_map(|p| {
                        values.iter().map(move |&v| {
                            let mut q = p.clone();
                            axis.apply(&mut q, v);
                            q
                        })
                    })
                    .collect();
            }
            best_candidate(eval.evaluate(points)?)
        }
        SearchMode::CoordinateDescent => {
            let mut current: Option<Candidate> = None;
            for _ in 0..grid.sweeps {
                for (axis, values) in &axes {
                    let base = current.as_ref().map_or(initial, |c| &c.spec);
                    let points = values
                        .iter()
                        .map(|&v| {
                            let mut q = base.clone();
                            axis.apply(&mut q, v);
                            q
                        })
                        .collect();
                    current = best_candidate(eval.evaluate(points)?);
                }
            }
            current
        }
    }
    .ok_or_else(|| Error::Parameter("grid is empty".into()))?;

    if best.score.is_none() {
        return Err(Error::Parameter(format!(
            "every grid point for `{}` is invalid",
            initial.label()
        )));
    }
    Ok(SearchOutcome {
        best,
        mode,
        cardinality,
        evaluations: eval.evaluations(),
        invalid_points: eval.invalid_points(),
    })
}

/// Single-row grid search: the best spec for a color with one row.
pub fn grid_search(
    detector: &Detector,
    initial: &ColorSpec,
    grid: &ParamGrid,
    samples: &[PreparedSample],
) -> Result<ColorSpec> {
    Ok(
        grid_search_row(detector, samples, std::slice::from_ref(initial), 0, grid)?
            .best
            .spec,
    )
}
