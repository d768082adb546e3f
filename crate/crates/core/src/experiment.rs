//! Declarative experiment and benchmark-table configurations and their
//! drivers. Both documents are TOML; the accepted keys are listed in
//! `docs/config.md`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::Bounds;
use crate::distance::DistanceMode;
use crate::error::{Error, Result};
use crate::models::{model_by_id, Model};
use crate::optimize::SolverConfig;
use crate::samplers::{EnsembleSize, SamplerConfig, Strategy};
use crate::store::EvalStore;
use crate::validity::{Preset, ToleranceConfig};
use crate::workflow::{self, ScoreBasis, SurrogateDb, Termination, WorkflowConfig, WorkflowResult};

pub const EVALS_FILE: &str = "evals.jsonl";
pub const SURROGATE_FILE: &str = "surrogate.json";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RunKind {
    #[default]
    Asymptotic,
    Single,
}

/// One experiment: a model, a workflow configuration and a list of seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: String,
    #[serde(default)]
    pub bounds: Option<Bounds>,
    #[serde(default)]
    pub run: RunKind,
    /// Named tolerances for both test and train, unless overridden by the
    /// `test` / `train` tables.
    #[serde(default)]
    pub preset: Option<Preset>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub distance: Option<DistanceMode>,
    #[serde(default)]
    pub train_budget: Option<usize>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub noise_sigma: Option<f64>,
    #[serde(default)]
    pub max_centers: Option<usize>,
    #[serde(default)]
    pub report_cap: Option<usize>,
    #[serde(default)]
    pub score_basis: Option<ScoreBasis>,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub test: Option<ToleranceConfig>,
    #[serde(default)]
    pub train: Option<ToleranceConfig>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = parse_toml(text, "config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let cfg: ExperimentConfig = parse_toml(&text, &path.display().to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn model(&self) -> Result<std::sync::Arc<dyn Model>> {
        model_by_id(&self.model, self.bounds.clone())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        let model = self.model()?;
        self.workflow(self.seeds[0]).validate(model.dim())
    }

    /// The workflow configuration for one seed.
    pub fn workflow(&self, seed: u64) -> WorkflowConfig {
        let base = WorkflowConfig::default();
        let preset = self.preset.map(ToleranceConfig::preset);
        WorkflowConfig {
            sampler: self.sampler.clone(),
            solver: self.solver,
            test: self.test.or(preset).unwrap_or(base.test),
            train: self.train.or(preset).unwrap_or(base.train),
            distance: self.distance.unwrap_or(base.distance),
            train_budget: self.train_budget.unwrap_or(base.train_budget),
            max_iterations: self.max_iterations.unwrap_or(base.max_iterations),
            noise_sigma: self.noise_sigma.unwrap_or(base.noise_sigma),
            max_centers: self.max_centers.unwrap_or(base.max_centers),
            report_cap: self.report_cap.or(base.report_cap),
            score_basis: self.score_basis.unwrap_or(base.score_basis),
            rng_seed: base.rng_seed,
        }
        .with_seed(seed)
    }
}

/// Runs one seed of an experiment with all artifacts written to `dir`.
/// Unless `resume` is set, artifacts from earlier runs are removed first.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, dir: &Path, resume: bool) -> Result<WorkflowResult> {
    let model = cfg.model()?;
    let wf = cfg.workflow(seed);
    wf.validate(model.dim())?;
    fs::create_dir_all(dir)?;
    let evals = dir.join(EVALS_FILE);
    let surrogate = dir.join(SURROGATE_FILE);
    if !resume {
        for f in [&evals, &surrogate] {
            if f.exists() {
                fs::remove_file(f)?;
            }
        }
    }
    let mut store = EvalStore::open(&evals, model.dim())?;
    let mut db = SurrogateDb::open(&surrogate)?;
    let result = match cfg.run {
        RunKind::Asymptotic => workflow::run_asymptotic(&*model, &wf, &mut store, &mut db)?,
        RunKind::Single => workflow::run_single(&*model, &wf, &mut store, &mut db, None)?,
    };
    let mut summary = Vec::new();
    workflow::write_summary_csv(&result.summaries, &mut summary)?;
    fs::write(dir.join(SUMMARY_FILE), summary)?;
    Ok(result)
}

/// Where a seed's artifacts go inside the experiment's output directory.
pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

/// One row group of the benchmark table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchCell {
    pub model: String,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default)]
    pub directed: bool,
    pub preset: Preset,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub n_s: Option<EnsembleSize>,
    #[serde(default)]
    pub warm: Option<usize>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub report_cap: Option<usize>,
    #[serde(default)]
    pub score_basis: Option<ScoreBasis>,
    #[serde(default)]
    pub bounds: Option<Bounds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "bench_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub report_cap: Option<usize>,
    #[serde(default)]
    pub distance: Option<DistanceMode>,
    #[serde(default, rename = "cell")]
    pub cells: Vec<BenchCell>,
}

fn bench_seeds() -> Vec<u64> {
    (0..5).collect()
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: BenchConfig = parse_toml(text, "config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let cfg: BenchConfig = parse_toml(&fs::read_to_string(path)?, &path.display().to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::Config("at least one [[cell]] is required".into()));
        }
        for (i, cell) in self.cells.iter().enumerate() {
            let exp = self.experiment(cell);
            exp.validate().map_err(|e| Error::Config(format!("cell {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    /// The experiment a cell expands to.
    pub fn experiment(&self, cell: &BenchCell) -> ExperimentConfig {
        let mut sampler = SamplerConfig { strategy: cell.strategy, directed: cell.directed, ..SamplerConfig::default() };
        if let Some(n_s) = &cell.n_s {
            sampler.n_s = n_s.clone();
        }
        if let Some(warm) = cell.warm {
            sampler.warm = warm;
        }
        ExperimentConfig {
            model: cell.model.clone(),
            bounds: cell.bounds.clone(),
            run: RunKind::Asymptotic,
            preset: Some(cell.preset),
            out: None,
            seeds: cell.seeds.clone().unwrap_or_else(|| self.seeds.clone()),
            distance: self.distance,
            train_budget: None,
            max_iterations: cell.max_iterations.or(self.max_iterations),
            noise_sigma: None,
            max_centers: None,
            report_cap: cell.report_cap.or(self.report_cap),
            score_basis: cell.score_basis,
            sampler,
            solver: SolverConfig::default(),
            test: None,
            train: None,
        }
    }
}

/// Outcome of one seed of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub function: String,
    pub ndim: usize,
    pub strategy: String,
    pub preset: Preset,
    pub seed: u64,
    pub outcome: std::result::Result<(usize, Termination), String>,
}

impl BenchRow {
    pub fn total_evals(&self) -> Option<usize> {
        self.outcome.as_ref().ok().map(|(n, _)| *n)
    }
}

pub fn strategy_label(strategy: Strategy, directed: bool) -> String {
    let name = match strategy {
        Strategy::Random => "random",
        Strategy::Lattice => "lattice",
        Strategy::Sparsity => "sparsity",
    };
    if directed {
        format!("directed-{name}")
    } else {
        name.to_string()
    }
}

/// Runs every seed of one cell in memory. Failures become rows rather than
/// errors.
pub fn run_cell(bench: &BenchConfig, cell: &BenchCell) -> Vec<BenchRow> {
    let exp = bench.experiment(cell);
    let ndim = exp.model().map(|m| m.dim()).unwrap_or(0);
    exp.seeds
        .iter()
        .map(|&seed| {
            let outcome = exp
                .model()
                .and_then(|model| {
                    let mut store = EvalStore::in_memory(model.dim());
                    let mut db = SurrogateDb::in_memory();
                    workflow::run_asymptotic(&*model, &exp.workflow(seed), &mut store, &mut db)
                })
                .map(|r| (r.total_evals, r.termination))
                .map_err(|e| e.to_string());
            BenchRow {
                function: cell.model.clone(),
                ndim,
                strategy: strategy_label(cell.strategy, cell.directed),
                preset: cell.preset,
                seed,
                outcome,
            }
        })
        .collect()
}

/// Median of the runs that produced a result.
pub fn median_total(rows: &[BenchRow]) -> Option<f64> {
    let mut v: Vec<usize> = rows.iter().filter_map(BenchRow::total_evals).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_unstable();
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] as f64 } else { (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0 })
}

/// Writes the table: one row per seed, then a `median` row per cell.
pub fn write_bench_csv<W: Write>(cells: &[Vec<BenchRow>], mut out: W) -> Result<()> {
    writeln!(out, "function,ndim,strategy,preset,seed,total_evals,status")?;
    for rows in cells {
        for r in rows {
            let (total, status) = match &r.outcome {
                Ok((n, t)) => (n.to_string(), t.to_string()),
                Err(e) => (String::new(), format!("error: {}", e.replace([',', '\n'], ";"))),
            };
            writeln!(out, "{},{},{},{},{},{},{}", r.function, r.ndim, r.strategy, r.preset, r.seed, total, status)?;
        }
        if let Some(first) = rows.first() {
            let median = median_total(rows).map_or(String::new(), |m| m.to_string());
            writeln!(out, "{},{},{},{},median,{},", first.function, first.ndim, first.strategy, first.preset, median)?;
        }
    }
    Ok(())
}
