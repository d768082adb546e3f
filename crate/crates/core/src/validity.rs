//! Validity predicates, the extrema registry and the convergence test.

use serde::{Deserialize, Serialize};

use crate::bounds::Bounds;
use crate::distance::{self, DistanceMode, DistanceReport};
use crate::error::{Error, Result};
use crate::optimize::SolverTrace;
use crate::rbf::{squared_distance, Predictor};
use crate::store::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PredicateForm {
    /// `ave ≤ tol_ave ∧ max ≤ tol_max`
    #[default]
    AveMax,
    /// `sum ≤ tol_sum ∧ max ≤ tol_max`
    SumMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Loose,
    Strict,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loose" => Ok(Preset::Loose),
            "strict" => Ok(Preset::Strict),
            other => Err(Error::InvalidArgument(format!("unknown preset `{other}` (expected loose or strict)"))),
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Preset::Loose => "loose",
            Preset::Strict => "strict",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    #[serde(default)]
    pub form: PredicateForm,
    pub tol_ave: f64,
    pub tol_max: f64,
    #[serde(default = "default_tol_sum")]
    pub tol_sum: f64,
    pub tol_stop: f64,
    /// Extrema window.
    #[serde(default = "default_window")]
    pub m: usize,
    /// Score window.
    #[serde(default = "default_window")]
    pub n: usize,
}

fn default_tol_sum() -> f64 {
    1e-3
}

fn default_window() -> usize {
    3
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig::preset(Preset::Loose)
    }
}

impl ToleranceConfig {
    pub fn preset(preset: Preset) -> Self {
        let (tol_ave, tol_max, tol_stop) = match preset {
            Preset::Loose => (1e-5, 1e-4, 2e-4),
            Preset::Strict => (1e-7, 1e-6, 2e-6),
        };
        ToleranceConfig {
            form: PredicateForm::AveMax,
            tol_ave,
            tol_max,
            tol_sum: default_tol_sum(),
            tol_stop,
            m: default_window(),
            n: default_window(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let tols = [self.tol_ave, self.tol_max, self.tol_sum, self.tol_stop];
        if tols.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Config(format!("tolerances must be positive: {self:?}")));
        }
        if self.m == 0 || self.n == 0 {
            return Err(Error::Config("windows m and n must be at least 1".into()));
        }
        Ok(())
    }
}

fn predicate(report: &DistanceReport, cfg: &ToleranceConfig) -> bool {
    let first = match cfg.form {
        PredicateForm::AveMax => report.ave <= cfg.tol_ave,
        PredicateForm::SumMax => report.sum <= cfg.tol_sum,
    };
    first && report.max <= cfg.tol_max
}

pub fn test_valid(report: &DistanceReport, cfg: &ToleranceConfig) -> bool {
    predicate(report, cfg)
}

pub fn train_valid(report: &DistanceReport, cfg: &ToleranceConfig) -> bool {
    predicate(report, cfg)
}

/// Training quality metric: the sum of per-point distances.
pub fn quality_delta(report: &DistanceReport) -> f64 {
    report.sum
}

/// Mean graphical distance from `s` to one iteration's data.
pub fn iteration_score<P: Predictor + ?Sized>(s: &P, data: &Dataset, bounds: &Bounds) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    Ok(distance::report(s, &data.xs, &data.ys, DistanceMode::Graphical, bounds)?.ave)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iteration: usize,
}

/// Distinct solver terminals seen so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremaRegistry {
    entries: Vec<Extremum>,
    dedupe_radius: f64,
    fed: bool,
}

impl ExtremaRegistry {
    pub fn new(dedupe_radius: f64) -> Result<Self> {
        if !(dedupe_radius > 0.0 && dedupe_radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("dedupe radius must be positive, got {dedupe_radius}")));
        }
        Ok(ExtremaRegistry { entries: Vec::new(), dedupe_radius, fed: false })
    }

    /// Radius of one thousandth of the box diagonal.
    pub fn for_bounds(bounds: &Bounds) -> Self {
        ExtremaRegistry::new(1e-3 * bounds.diagonal()).expect("bounds have a positive diagonal")
    }

    pub fn entries(&self) -> &[Extremum] {
        &self.entries
    }

    pub fn dedupe_radius(&self) -> f64 {
        self.dedupe_radius
    }

    /// Whether any solver output has ever been offered.
    pub fn is_fed(&self) -> bool {
        self.fed
    }

    /// Inserts the terminal of every tolerance-terminated trace that is
    /// farther than the dedupe radius from all known entries.
    pub fn update(&mut self, traces: &[SolverTrace], iteration: usize) -> usize {
        self.fed = true;
        let r2 = self.dedupe_radius * self.dedupe_radius;
        let mut inserted = 0;
        for t in traces.iter().filter(|t| t.converged()) {
            if self.entries.iter().all(|e| squared_distance(&e.x, &t.best_x) > r2) {
                self.entries.push(Extremum { x: t.best_x.clone(), value: t.best_f, iteration });
                inserted += 1;
            }
        }
        inserted
    }

    /// Insertions stamped within `[first, last]`.
    pub fn inserted_between(&self, first: usize, last: usize) -> usize {
        self.entries.iter().filter(|e| (first..=last).contains(&e.iteration)).count()
    }

    /// True when nothing new was found in the last `m` iterations up to and
    /// including `current`. Always false before `m` iterations have run, and
    /// for a registry that has never been fed.
    pub fn omega(&self, current: usize, m: usize) -> bool {
        if !self.fed || m == 0 || current + 1 < m {
            return false;
        }
        self.inserted_between(current + 1 - m, current) == 0
    }
}

/// Which disjunct of the convergence test held.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergedBy {
    Omega,
    ScoreWindow,
}

/// The convergence test at iteration `current`. `scores[i]` is iteration
/// `i`'s score, if it has one; the last `cfg.n` iterations form the window
/// and unscored iterations are skipped.
pub fn converged(registry: &ExtremaRegistry, current: usize, scores: &[Option<f64>], cfg: &ToleranceConfig) -> Option<ConvergedBy> {
    if registry.omega(current, cfg.m) {
        return Some(ConvergedBy::Omega);
    }
    let window = score_window(scores, current, cfg.n);
    if !window.is_empty() && window.iter().all(|s| *s <= cfg.tol_stop) {
        return Some(ConvergedBy::ScoreWindow);
    }
    None
}

/// Scores of iterations `current − n + 1 ..= current` that have one.
pub fn score_window(scores: &[Option<f64>], current: usize, n: usize) -> Vec<f64> {
    let end = (current + 1).min(scores.len());
    let start = (current + 1).saturating_sub(n).min(end);
    scores[start..end].iter().flatten().copied().collect()
}
