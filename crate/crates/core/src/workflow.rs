//! The sample → test → train loop and its asymptotic variant.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::Bounds;
use crate::distance::{self, DistanceMode, DistanceReport};
use crate::error::{Error, FitError, Result};
use crate::models::Model;
use crate::optimize::SolverConfig;
use crate::rbf::{Hyperparams, Surrogate, DEFAULT_MAX_CENTERS};
use crate::samplers::{sample_iteration, SamplerConfig};
use crate::store::{Dataset, EvalStore};
use crate::validity::{self, ConvergedBy, ExtremaRegistry, ToleranceConfig};

/// Smoothing values tried during training, in order.
pub const SMOOTH_SCHEDULE: [f64; 6] = [0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2];
/// Noise seeds tried per smoothing value.
pub const SEEDS_PER_SMOOTH: usize = 2;

/// Which surrogate an iteration's score is measured with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreBasis {
    /// The surrogate retrained on all data including the iteration's own.
    #[default]
    Retrained,
    /// The surrogate in force when the iteration's data arrived, i.e. before
    /// it was retrained on that data. The first iteration has no score.
    Incoming,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkflowConfig {
    pub sampler: SamplerConfig,
    pub solver: SolverConfig,
    pub test: ToleranceConfig,
    pub train: ToleranceConfig,
    pub distance: DistanceMode,
    pub train_budget: usize,
    pub max_iterations: usize,
    /// Jitter scale used for every training candidate.
    pub noise_sigma: f64,
    pub max_centers: usize,
    /// Evaluate training and test reports on at most this many points.
    pub report_cap: Option<usize>,
    pub score_basis: ScoreBasis,
    /// Seeds the jitter of training candidates.
    pub rng_seed: u64,
}

impl Default for WorkflowConfig {
    fn default() -> Self {
        WorkflowConfig {
            sampler: SamplerConfig::default(),
            solver: SolverConfig::default(),
            test: ToleranceConfig::default(),
            train: ToleranceConfig::default(),
            distance: DistanceMode::Graphical,
            train_budget: 12,
            max_iterations: 100,
            noise_sigma: Hyperparams::default().noise_sigma,
            max_centers: DEFAULT_MAX_CENTERS,
            report_cap: None,
            score_basis: ScoreBasis::Retrained,
            rng_seed: 0,
        }
    }
}

impl WorkflowConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        self.sampler.validate(dim)?;
        self.solver.validate()?;
        self.test.validate()?;
        self.train.validate()?;
        if self.train_budget == 0 || self.max_iterations == 0 {
            return Err(Error::Config("train_budget and max_iterations must be at least 1".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("noise_sigma must be finite and non-negative".into()));
        }
        if self.max_centers < dim + 1 {
            return Err(Error::Config(format!("max_centers must be at least {}", dim + 1)));
        }
        if self.report_cap == Some(0) {
            return Err(Error::Config("report_cap must be at least 1".into()));
        }
        Ok(())
    }

    /// Sets both the sampling and the training seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.sampler.rng_seed = seed;
        self.rng_seed = seed;
        self
    }
}

/// Holds the surrogate currently in force, optionally mirrored to a file.
#[derive(Debug, Default)]
pub struct SurrogateDb {
    path: Option<PathBuf>,
    current: Option<Surrogate>,
}

impl SurrogateDb {
    pub fn in_memory() -> Self {
        SurrogateDb::default()
    }

    /// Uses `path` as backing file, loading it when it exists.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let current = if path.exists() { Some(Surrogate::load(&path)?) } else { None };
        Ok(SurrogateDb { path: Some(path), current })
    }

    pub fn current(&self) -> Option<&Surrogate> {
        self.current.as_ref()
    }

    pub fn put(&mut self, s: Surrogate) -> Result<()> {
        if let Some(path) = &self.path {
            s.save(path)?;
        }
        self.current = Some(s);
        Ok(())
    }
}

/// Knobs shared by every training phase.
#[derive(Debug, Clone)]
pub struct TrainSettings {
    pub train: ToleranceConfig,
    pub mode: DistanceMode,
    pub budget: usize,
    pub noise_sigma: f64,
    pub max_centers: usize,
    pub report_cap: Option<usize>,
}

impl TrainSettings {
    pub fn from_config(cfg: &WorkflowConfig) -> Self {
        TrainSettings {
            train: cfg.train,
            mode: cfg.distance,
            budget: cfg.train_budget,
            noise_sigma: cfg.noise_sigma,
            max_centers: cfg.max_centers,
            report_cap: cfg.report_cap,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub surrogate: Surrogate,
    pub delta: f64,
    pub train_valid: bool,
    /// The report `delta` was computed from.
    pub report: DistanceReport,
    /// δ of every candidate that fitted, in schedule order.
    pub candidate_deltas: Vec<f64>,
    pub failed_fits: usize,
    /// Whether the surrogate DB was updated.
    pub persisted: bool,
}

/// The `(smooth, noise_seed)` candidates of one training phase.
pub fn hyper_schedule(budget: usize, noise_sigma: f64, seed: u64, phase: u64) -> Vec<Hyperparams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(phase.wrapping_add(1 << 32));
    let seeds: Vec<u64> = (0..SEEDS_PER_SMOOTH).map(|_| rng.next_u64()).collect();
    SMOOTH_SCHEDULE
        .iter()
        .flat_map(|&smooth| seeds.iter().map(move |&noise_seed| Hyperparams { smooth, noise_sigma, noise_seed }))
        .take(budget)
        .collect()
}

/// A report over `data`, or over an evenly strided subset of at most `cap`
/// points.
pub fn capped_report(s: &Surrogate, data: &Dataset, mode: DistanceMode, bounds: &Bounds, cap: Option<usize>) -> Result<DistanceReport> {
    match cap {
        Some(cap) if data.len() > cap => {
            let idx: Vec<usize> = (0..cap).map(|k| k * data.len() / cap).collect();
            let xs: Vec<Vec<f64>> = idx.iter().map(|&i| data.xs[i].clone()).collect();
            let ys: Vec<f64> = idx.iter().map(|&i| data.ys[i]).collect();
            distance::report(s, &xs, &ys, mode, bounds)
        }
        _ => distance::report(s, &data.xs, &data.ys, mode, bounds),
    }
}

/// Fits candidates from the hyperparameter schedule against `data`, keeps the
/// one with the smallest δ and stores it in `db` if it beats the surrogate
/// already there (re-measured on the same data). Stops early at the first
/// train-valid candidate.
pub fn train_until_valid(
    data: &Dataset,
    bounds: &Bounds,
    settings: &TrainSettings,
    db: &mut SurrogateDb,
    schedule: &[Hyperparams],
    keep: &[Vec<f64>],
    accept: &dyn Fn(&DistanceReport) -> bool,
) -> Result<TrainOutcome> {
    let mut best: Option<(Surrogate, DistanceReport, bool)> = None;
    let mut candidate_deltas = Vec::new();
    let mut failed_fits = 0;
    let mut last_failure = None;
    for hyper in schedule {
        let s = match Surrogate::fit_capped(&data.xs, &data.ys, *hyper, settings.max_centers, keep) {
            Ok(s) => s,
            Err(Error::Fit(e)) => {
                log::debug!("fit with {hyper:?} failed: {e}");
                failed_fits += 1;
                last_failure = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let report = capped_report(&s, data, settings.mode, bounds, settings.report_cap)?;
        let delta = validity::quality_delta(&report);
        let valid = accept(&report);
        candidate_deltas.push(delta);
        if best.as_ref().is_none_or(|(_, r, _)| delta < validity::quality_delta(r)) {
            best = Some((s, report, valid));
        }
        if valid {
            break;
        }
    }
    let Some((surrogate, report, train_valid)) = best else {
        return Err(Error::TrainFailure(last_failure.unwrap_or(FitError::TooFewPoints {
            got: data.len(),
            required: bounds.dim() + 1,
            dim: bounds.dim(),
        })));
    };
    if let Some(incumbent) = db.current().filter(|s| s.dim() == bounds.dim()) {
        let incumbent_report = capped_report(incumbent, data, settings.mode, bounds, settings.report_cap)?;
        let incumbent_delta = validity::quality_delta(&incumbent_report);
        if incumbent_delta <= validity::quality_delta(&report) {
            return Ok(TrainOutcome {
                surrogate: incumbent.clone(),
                delta: incumbent_delta,
                train_valid: accept(&incumbent_report),
                report: incumbent_report,
                candidate_deltas,
                failed_fits,
                persisted: false,
            });
        }
    }
    db.put(surrogate.clone())?;
    let delta = validity::quality_delta(&report);
    Ok(TrainOutcome { surrogate, delta, train_valid, report, candidate_deltas, failed_fits, persisted: true })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub new_evals: usize,
    pub total_evals: usize,
    pub score: Option<f64>,
    pub delta: f64,
    pub train_valid: bool,
    pub test_valid: bool,
    pub new_extrema: usize,
    pub converged: bool,
    pub converged_by: Option<ConvergedBy>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    MaxIterations,
    TrainExhausted,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max-iterations",
            Termination::TrainExhausted => "train-exhausted",
        })
    }
}

#[derive(Debug, Clone)]
pub struct WorkflowResult {
    pub summaries: Vec<IterationSummary>,
    pub surrogate: Option<Surrogate>,
    pub termination: Termination,
    pub total_evals: usize,
    pub model_calls: u64,
    pub registry: ExtremaRegistry,
}

impl WorkflowResult {
    pub fn last(&self) -> Option<&IterationSummary> {
        self.summaries.last()
    }

    /// Checks that a converged run really satisfied the disjunct it claims:
    /// every score in the window within `tol_stop`, or no new extrema in the
    /// extrema window.
    pub fn check_convergence(&self, cfg: &ToleranceConfig) -> std::result::Result<(), String> {
        let Some(last) = self.summaries.last() else { return Ok(()) };
        match last.converged_by {
            Some(ConvergedBy::ScoreWindow) => {
                let window: Vec<f64> = self
                    .summaries
                    .iter()
                    .filter(|s| s.iteration + cfg.n > last.iteration)
                    .filter_map(|s| s.score)
                    .collect();
                if window.is_empty() || window.iter().any(|s| *s > cfg.tol_stop) {
                    return Err(format!("score window {window:?} exceeds tol_stop {}", cfg.tol_stop));
                }
            }
            Some(ConvergedBy::Omega) => {
                let first = (last.iteration + 1).saturating_sub(cfg.m);
                let found = self.registry.inserted_between(first, last.iteration);
                if found > 0 || last.iteration + 1 < cfg.m {
                    return Err(format!("{found} extrema inserted in iterations {first}..={}", last.iteration));
                }
            }
            None => {}
        }
        if self.termination == Termination::Converged && !(last.test_valid && last.converged) {
            return Err("converged termination without a valid, converged last iteration".into());
        }
        Ok(())
    }
}

fn next_iteration(store: &EvalStore) -> usize {
    store.max_iteration().map_or(0, |m| m + 1)
}

fn keep_locations(registry: &ExtremaRegistry) -> Vec<Vec<f64>> {
    registry.entries().iter().map(|e| e.x.clone()).collect()
}

/// Repeats whole iterations until the surrogate is test valid and the
/// convergence test holds.
///
/// Each iteration samples at least `warm` new evaluations, scores the
/// iteration, retrains against all data, and tests the result against all
/// data.
pub fn run_asymptotic(model: &dyn Model, cfg: &WorkflowConfig, store: &mut EvalStore, db: &mut SurrogateDb) -> Result<WorkflowResult> {
    let bounds = model.bounds().clone();
    cfg.validate(bounds.dim())?;
    let settings = TrainSettings::from_config(cfg);
    let accept = |r: &DistanceReport| validity::train_valid(r, &cfg.train);
    let mut registry = ExtremaRegistry::for_bounds(&bounds);
    let mut summaries = Vec::new();
    let first = next_iteration(store);
    let mut scores: Vec<Option<f64>> = vec![None; first];
    let mut termination = Termination::MaxIterations;

    for iteration in first..first + cfg.max_iterations {
        let sample = sample_iteration(model, store, &cfg.sampler, &cfg.solver, &bounds, iteration)?;
        let new_extrema = if cfg.sampler.directed { registry.update(&sample.traces, iteration) } else { 0 };
        let fresh = store.query_iteration(iteration);

        let mut score = match (cfg.score_basis, db.current()) {
            (ScoreBasis::Incoming, Some(s)) => Some(validity::iteration_score(s, &fresh, &bounds)?),
            _ => None,
        };

        let all = store.query_all();
        let schedule = hyper_schedule(cfg.train_budget, cfg.noise_sigma, cfg.rng_seed, iteration as u64);
        let trained = match train_until_valid(&all, &bounds, &settings, db, &schedule, &keep_locations(&registry), &accept) {
            Ok(t) => Some(t),
            Err(Error::TrainFailure(e)) => {
                log::warn!("iteration {iteration}: training failed: {e}");
                None
            }
            Err(e) => return Err(e),
        };
        if cfg.score_basis == ScoreBasis::Retrained {
            if let Some(t) = &trained {
                score = Some(validity::iteration_score(&t.surrogate, &fresh, &bounds)?);
            }
        }
        scores.push(score);

        let (delta, train_valid, test_valid) = match &trained {
            // Training already measured this surrogate against all data
            // with the same mode and cap.
            Some(t) => (t.delta, t.train_valid, validity::test_valid(&t.report, &cfg.test)),
            None => (f64::NAN, false, false),
        };
        let converged_by = validity::converged(&registry, iteration, &scores, &cfg.test);
        let summary = IterationSummary {
            iteration,
            new_evals: sample.new_evals,
            total_evals: store.len(),
            score,
            delta,
            train_valid,
            test_valid,
            new_extrema,
            converged: converged_by.is_some(),
            converged_by,
        };
        log::info!(
            "iteration {iteration}: {} new, {} total, score {:?}, delta {delta:.3e}, test_valid {test_valid}, converged {:?}",
            summary.new_evals,
            summary.total_evals,
            score,
            converged_by
        );
        summaries.push(summary);
        if test_valid && converged_by.is_some() {
            termination = Termination::Converged;
            break;
        }
    }
    Ok(WorkflowResult {
        summaries,
        surrogate: db.current().cloned(),
        termination,
        total_evals: store.len(),
        model_calls: store.model_calls(),
        registry,
    })
}

/// The basic loop: test the stored surrogate against all data and stop if it
/// is valid; otherwise train, sampling more data whenever there is too
/// little to fit or training does not reach validity.
///
/// `accept` overrides the training predicate (defaults to the configured
/// train tolerances). `max_iterations` caps the number of sampling rounds.
pub fn run_single(
    model: &dyn Model,
    cfg: &WorkflowConfig,
    store: &mut EvalStore,
    db: &mut SurrogateDb,
    accept: Option<&dyn Fn(&DistanceReport) -> bool>,
) -> Result<WorkflowResult> {
    let bounds = model.bounds().clone();
    let dim = bounds.dim();
    cfg.validate(dim)?;
    let settings = TrainSettings::from_config(cfg);
    let default_accept = |r: &DistanceReport| validity::train_valid(r, &cfg.train);
    let accept: &dyn Fn(&DistanceReport) -> bool = accept.unwrap_or(&default_accept);
    let mut registry = ExtremaRegistry::for_bounds(&bounds);
    let mut summaries: Vec<IterationSummary> = Vec::new();
    let mut rounds = 0;
    let mut needs_data = store.len() < dim + 1;
    let mut last_train_valid = true;

    let finish = |summaries, termination, store: &EvalStore, db: &SurrogateDb, registry| WorkflowResult {
        summaries,
        surrogate: db.current().cloned(),
        termination,
        total_evals: store.len(),
        model_calls: store.model_calls(),
        registry,
    };

    loop {
        if !store.is_empty() {
            if let Some(s) = db.current() {
                let report = capped_report(s, &store.query_all(), cfg.distance, &bounds, cfg.report_cap)?;
                if validity::test_valid(&report, &cfg.test) {
                    if let Some(last) = summaries.last_mut() {
                        last.test_valid = true;
                        last.converged = true;
                    }
                    return Ok(finish(summaries, Termination::Converged, store, db, registry));
                }
            }
        }

        if needs_data {
            if rounds >= cfg.max_iterations {
                let t = if last_train_valid { Termination::MaxIterations } else { Termination::TrainExhausted };
                return Ok(finish(summaries, t, store, db, registry));
            }
            let iteration = next_iteration(store);
            let sample = sample_iteration(model, store, &cfg.sampler, &cfg.solver, &bounds, iteration)?;
            let new_extrema = if cfg.sampler.directed { registry.update(&sample.traces, iteration) } else { 0 };
            let score = match db.current() {
                Some(s) => Some(validity::iteration_score(s, &store.query_iteration(iteration), &bounds)?),
                None => None,
            };
            summaries.push(IterationSummary {
                iteration,
                new_evals: sample.new_evals,
                total_evals: store.len(),
                score,
                delta: f64::NAN,
                train_valid: false,
                test_valid: false,
                new_extrema,
                converged: false,
                converged_by: None,
            });
            rounds += 1;
            needs_data = false;
            // Fresh data goes through testing first.
            if db.current().is_some() {
                continue;
            }
        }

        let all = store.query_all();
        if all.len() < dim + 1 {
            needs_data = true;
            continue;
        }
        let phase = summaries.last().map_or(0, |s| s.iteration as u64);
        let schedule = hyper_schedule(cfg.train_budget, cfg.noise_sigma, cfg.rng_seed, phase);
        match train_until_valid(&all, &bounds, &settings, db, &schedule, &keep_locations(&registry), accept) {
            Ok(t) => {
                last_train_valid = t.train_valid;
                if let Some(last) = summaries.last_mut() {
                    last.delta = t.delta;
                    last.train_valid = t.train_valid;
                }
                // Retraining on unchanged data gives the same answer, so
                // whatever happens at the test step, new data is needed next.
                needs_data = true;
            }
            Err(Error::TrainFailure(e)) => {
                log::warn!("training failed: {e}");
                last_train_valid = false;
                needs_data = true;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Writes the per-iteration table.
pub fn write_summary_csv<W: Write>(summaries: &[IterationSummary], mut out: W) -> Result<()> {
    writeln!(out, "iter,new_evals,total_evals,score,delta,test_valid,new_extrema,converged")?;
    for s in summaries {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.iteration,
            s.new_evals,
            s.total_evals,
            s.score.map_or_else(|| "nan".to_string(), fmt_float),
            fmt_float(s.delta),
            s.test_valid,
            s.new_extrema,
            s.converged
        )?;
    }
    Ok(())
}

fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{model_by_id, FnModel, ModelSpec};
    use crate::samplers::EnsembleSize;
    use crate::store::Source;

    fn exact_settings() -> TrainSettings {
        TrainSettings {
            train: ToleranceConfig::default(),
            mode: DistanceMode::Vertical,
            budget: 12,
            noise_sigma: 0.0,
            max_centers: DEFAULT_MAX_CENTERS,
            report_cap: None,
        }
    }

    #[test]
    fn schedule_order_and_budget() {
        let s = hyper_schedule(12, 1e-8, 3, 0);
        assert_eq!(s.len(), 12);
        assert_eq!(s[0].smooth, 0.0);
        assert_eq!(s[1].smooth, 0.0);
        assert_ne!(s[0].noise_seed, s[1].noise_seed);
        assert_eq!(s[2].smooth, 1e-10);
        assert_eq!(s[2].noise_seed, s[0].noise_seed);
        assert_eq!(s[11].smooth, 1e-2);
        assert_eq!(hyper_schedule(5, 1e-8, 3, 0).len(), 5);
        assert_ne!(hyper_schedule(2, 1e-8, 3, 1)[0].noise_seed, s[0].noise_seed);
        assert_eq!(hyper_schedule(2, 1e-8, 3, 0), s[..2].to_vec());
    }

    #[test]
    fn well_spread_exact_data_trains_in_one_fit() {
        let m = model_by_id("rosenbrock2", None).unwrap();
        let mut store = EvalStore::in_memory(2);
        let cfg = SamplerConfig { warm: 100, batch_size: 100, ..Default::default() };
        sample_iteration(&*m, &mut store, &cfg, &SolverConfig::default(), m.bounds(), 0).unwrap();
        let mut db = SurrogateDb::in_memory();
        let settings = exact_settings();
        let schedule = hyper_schedule(12, 0.0, 0, 0);
        let accept = |r: &DistanceReport| validity::train_valid(r, &settings.train);
        let out = train_until_valid(&store.query_all(), m.bounds(), &settings, &mut db, &schedule, &[], &accept).unwrap();
        assert!(out.train_valid);
        assert_eq!(out.candidate_deltas.len(), 1);
        assert!(out.persisted);
        assert!(db.current().is_some());
    }

    #[test]
    fn coincident_points_fail_training() {
        let data: Dataset = Dataset { xs: vec![vec![1.0, 1.0]; 3], ys: vec![1.0; 3], seqs: vec![0, 1, 2] };
        let b = Bounds::uniform(2, 0.0, 2.0).unwrap();
        let mut db = SurrogateDb::in_memory();
        let settings = TrainSettings { budget: 1, ..exact_settings() };
        let err = train_until_valid(&data, &b, &settings, &mut db, &hyper_schedule(1, 0.0, 0, 0), &[], &|_| true).unwrap_err();
        assert!(matches!(err, Error::TrainFailure(_)), "{err}");
    }

    #[test]
    fn returned_delta_is_minimal() {
        let m = model_by_id("rastrigin2", None).unwrap();
        let mut store = EvalStore::in_memory(2);
        let cfg = SamplerConfig { warm: 60, batch_size: 60, ..Default::default() };
        sample_iteration(&*m, &mut store, &cfg, &SolverConfig::default(), m.bounds(), 0).unwrap();
        let mut db = SurrogateDb::in_memory();
        let settings = TrainSettings { budget: 6, max_centers: 40, mode: DistanceMode::Vertical, ..exact_settings() };
        let schedule = hyper_schedule(6, 1e-8, 0, 0);
        let out = train_until_valid(&store.query_all(), m.bounds(), &settings, &mut db, &schedule, &[], &|_| false).unwrap();
        assert_eq!(out.candidate_deltas.len(), 6);
        assert!(out.candidate_deltas.iter().all(|d| out.delta <= *d));
        assert!(!out.train_valid);
    }

    #[test]
    fn summary_csv_format() {
        let rows = vec![IterationSummary {
            iteration: 0,
            new_evals: 1000,
            total_evals: 1000,
            score: None,
            delta: 1.5e-7,
            train_valid: true,
            test_valid: true,
            new_extrema: 0,
            converged: false,
            converged_by: None,
        }];
        let mut buf = Vec::new();
        write_summary_csv(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "iter,new_evals,total_evals,score,delta,test_valid,new_extrema,converged\n0,1000,1000,nan,1.5e-7,true,0,false\n"
        );
    }

    fn flat_model() -> FnModel<impl Fn(&[f64]) -> Result<f64> + Send + Sync> {
        let spec = ModelSpec::new("flat", Bounds::uniform(2, 0.0, 1.0).unwrap(), "f = 0");
        FnModel::new(spec, |_: &[f64]| Ok(0.0))
    }

    #[test]
    fn flat_model_directed_converges_quickly() {
        let m = flat_model();
        let cfg = WorkflowConfig {
            sampler: SamplerConfig { directed: true, warm: 100, n_s: EnsembleSize::Scalar(8), ..Default::default() },
            ..Default::default()
        };
        let mut store = EvalStore::in_memory(2);
        let mut db = SurrogateDb::in_memory();
        let r = run_asymptotic(&m, &cfg, &mut store, &mut db).unwrap();
        assert_eq!(r.termination, Termination::Converged);
        assert!(r.summaries.len() <= cfg.test.m + 1, "{:?}", r.summaries);
        r.check_convergence(&cfg.test).unwrap();
        for w in r.summaries.windows(2) {
            assert!(w[1].total_evals >= w[0].total_evals + cfg.sampler.warm);
        }
    }

    #[test]
    fn run_single_paths() {
        let m = model_by_id("rosenbrock2", None).unwrap();
        let cfg = WorkflowConfig {
            sampler: SamplerConfig { warm: 50, batch_size: 50, ..Default::default() },
            max_iterations: 3,
            ..Default::default()
        };
        let mut store = EvalStore::in_memory(2);
        let mut db = SurrogateDb::in_memory();
        let r = run_single(&*m, &cfg, &mut store, &mut db, None).unwrap();
        assert!(store.records().iter().all(|r| r.source == Source::SamplerStart));
        assert_eq!(r.summaries[0].total_evals, 50, "sampling precedes the first training");
        assert_eq!(r.termination, Termination::Converged);

        let calls = store.model_calls();
        let again = run_single(&*m, &cfg, &mut store, &mut db, None).unwrap();
        assert_eq!(again.termination, Termination::Converged);
        assert_eq!(store.model_calls(), calls);
        assert!(again.summaries.is_empty());

        let strict = WorkflowConfig {
            test: ToleranceConfig { tol_ave: 1e-300, tol_max: 1e-300, ..ToleranceConfig::default() },
            ..cfg.clone()
        };
        let mut store = EvalStore::in_memory(2);
        let mut db = SurrogateDb::in_memory();
        let never = |_: &DistanceReport| false;
        let r = run_single(&*m, &strict, &mut store, &mut db, Some(&never)).unwrap();
        assert_eq!(r.termination, Termination::TrainExhausted);
        assert_eq!(r.summaries.len(), 3);
    }
}
