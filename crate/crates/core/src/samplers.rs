//! Strategies for choosing new model evaluations each iteration.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::Bounds;
use crate::error::{Error, Result};
use crate::models::Model;
use crate::optimize::{run_ensemble, SolverConfig, SolverTrace};
use crate::rbf::squared_distance;
use crate::store::{EvalStore, Source};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    #[default]
    Random,
    Lattice,
    Sparsity,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Strategy::Random),
            "lattice" => Ok(Strategy::Lattice),
            "sparsity" => Ok(Strategy::Sparsity),
            other => Err(Error::InvalidArgument(format!("unknown strategy `{other}`"))),
        }
    }
}

/// Ensemble size: a total count, or (lattice only) bins per dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnsembleSize {
    Scalar(usize),
    PerDim(Vec<usize>),
}

impl Default for EnsembleSize {
    fn default() -> Self {
        EnsembleSize::Scalar(16)
    }
}

impl EnsembleSize {
    pub fn total(&self) -> usize {
        match self {
            EnsembleSize::Scalar(n) => *n,
            EnsembleSize::PerDim(bins) => bins.iter().product(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub strategy: Strategy,
    pub directed: bool,
    pub n_s: EnsembleSize,
    pub batch_size: usize,
    pub warm: usize,
    /// Candidate pool for sparsity selection; `None` means `10 * k * dim`.
    pub pool_size: Option<usize>,
    pub rng_seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            strategy: Strategy::Random,
            directed: false,
            n_s: EnsembleSize::default(),
            batch_size: 500,
            warm: 1000,
            pool_size: None,
            rng_seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |what: String| Err(Error::Config(format!("sampler: {what}")));
        if self.warm == 0 || self.batch_size == 0 {
            return bad("warm and batch_size must be at least 1".into());
        }
        match &self.n_s {
            EnsembleSize::Scalar(0) => return bad("n_s must be at least 1".into()),
            EnsembleSize::PerDim(bins) => {
                if self.strategy != Strategy::Lattice {
                    return bad("per-dimension n_s is only valid for the lattice strategy".into());
                }
                if bins.len() != dim {
                    return bad(format!("n_s has {} entries but the model has dimension {dim}", bins.len()));
                }
                if bins.contains(&0) {
                    return bad("every n_s entry must be at least 1".into());
                }
            }
            EnsembleSize::Scalar(_) => {}
        }
        if let Some(pool) = self.pool_size {
            if pool < self.n_s.total() {
                return bad(format!("pool_size {pool} is smaller than n_s {}", self.n_s.total()));
            }
        }
        Ok(())
    }

    /// The generator for a given iteration: independent streams per
    /// iteration, so replaying any iteration needs only the seed.
    pub fn rng_for(&self, iteration: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(iteration as u64);
        rng
    }
}

/// `n` points drawn uniformly from the box.
pub fn random_batch<R: Rng + ?Sized>(bounds: &Bounds, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..bounds.dim()).map(|i| uniform(rng, bounds.lo()[i], bounds.hi()[i])).collect())
        .collect()
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    (lo + u * (hi - lo)).min(hi)
}

/// One uniform start in each selected cell of a regular grid over the box.
pub fn lattice_starts<R: Rng + ?Sized>(bounds: &Bounds, n_s: &EnsembleSize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let dim = bounds.dim();
    let (bins, cells): (Vec<usize>, Vec<usize>) = match n_s {
        EnsembleSize::PerDim(bins) => {
            Error::check_dim(dim, bins.len())?;
            if bins.contains(&0) {
                return Err(Error::InvalidArgument("lattice bins must be at least 1".into()));
            }
            let total = checked_product(bins)?;
            (bins.clone(), (0..total).collect())
        }
        EnsembleSize::Scalar(n) => {
            if *n == 0 {
                return Err(Error::InvalidArgument("n_s must be at least 1".into()));
            }
            let mut b = 1usize;
            while b.checked_pow(dim as u32).is_none_or(|c| c < *n) {
                b += 1;
            }
            let total = b.pow(dim as u32);
            assert!(*n <= total);
            let mut chosen = index::sample(rng, total, *n).into_vec();
            chosen.sort_unstable();
            (vec![b; dim], chosen)
        }
    };
    Ok(cells
        .into_iter()
        .map(|cell| {
            let mut rest = cell;
            let mut point = vec![0.0; dim];
            // Last coordinate varies fastest.
            for i in (0..dim).rev() {
                let k = rest % bins[i];
                rest /= bins[i];
                let w = bounds.width(i) / bins[i] as f64;
                let lo = bounds.lo()[i] + k as f64 * w;
                point[i] = uniform(rng, lo, (lo + w).min(bounds.hi()[i]));
            }
            point
        })
        .collect())
}

fn checked_product(bins: &[usize]) -> Result<usize> {
    bins.iter()
        .try_fold(1usize, |acc, &b| acc.checked_mul(b))
        .ok_or_else(|| Error::InvalidArgument("lattice has too many cells".into()))
}

/// Greedy farthest-point selection of `k` points from a uniform candidate
/// pool, measured against `existing` and the points already selected.
pub fn sparsity_starts<R: Rng + ?Sized>(
    bounds: &Bounds,
    existing: &[Vec<f64>],
    k: usize,
    pool_size: Option<usize>,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let pool_size = pool_size.unwrap_or(10 * k * bounds.dim()).max(k);
    let pool = random_batch(bounds, pool_size, rng);
    select_farthest(&pool, existing, k)
}

/// The selection step of [`sparsity_starts`] over a fixed pool. Ties go to
/// the lowest pool index.
pub fn select_farthest(pool: &[Vec<f64>], existing: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    let mut nearest: Vec<f64> = pool
        .iter()
        .map(|c| existing.iter().map(|e| squared_distance(c, e)).fold(f64::INFINITY, f64::min))
        .collect();
    let mut taken = vec![false; pool.len()];
    let mut out = Vec::with_capacity(k);
    for _ in 0..k.min(pool.len()) {
        let mut best = None;
        for (i, &d) in nearest.iter().enumerate() {
            if !taken[i] && best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        let Some((i, _)) = best else { break };
        taken[i] = true;
        for (j, c) in pool.iter().enumerate() {
            nearest[j] = nearest[j].min(squared_distance(c, &pool[i]));
        }
        out.push(pool[i].clone());
    }
    out
}

/// What one call to [`sample_iteration`] produced.
#[derive(Debug, Clone, Default)]
pub struct IterationSample {
    pub new_evals: usize,
    pub traces: Vec<SolverTrace>,
    pub waves: usize,
}

fn starts_for<R: Rng + ?Sized>(cfg: &SamplerConfig, bounds: &Bounds, store: &EvalStore, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let n = cfg.n_s.total();
    Ok(match cfg.strategy {
        Strategy::Random => random_batch(bounds, n, rng),
        Strategy::Lattice => lattice_starts(bounds, &cfg.n_s, rng)?,
        Strategy::Sparsity => {
            let existing: Vec<Vec<f64>> = store.records().iter().map(|r| r.x.clone()).collect();
            sparsity_starts(bounds, &existing, n, cfg.pool_size, rng)
        }
    })
}

/// Adds at least `warm` new evaluations to `store`, all stamped with
/// `iteration`.
///
/// Traditional mode records whole draws (batches of `batch_size` for random,
/// `n_s` starts otherwise). Directed mode runs a solver from each start and
/// records every probe; solver output is written in start order after each
/// wave so the record stream does not depend on thread scheduling.
pub fn sample_iteration(
    model: &dyn Model,
    store: &mut EvalStore,
    sampler: &SamplerConfig,
    solver: &SolverConfig,
    bounds: &Bounds,
    iteration: usize,
) -> Result<IterationSample> {
    let dim = bounds.dim();
    Error::check_dim(model.dim(), dim)?;
    Error::check_dim(store.dim(), dim)?;
    sampler.validate(dim)?;
    solver.validate()?;
    let mut rng = sampler.rng_for(iteration);
    let before = store.len();
    let mut out = IterationSample::default();

    if !sampler.directed {
        while store.len() - before < sampler.warm {
            let draw = match sampler.strategy {
                Strategy::Random => random_batch(bounds, sampler.batch_size, &mut rng),
                _ => starts_for(sampler, bounds, store, &mut rng)?,
            };
            for x in &draw {
                store.cached_evaluate(model, x, iteration, Source::SamplerStart)?;
            }
            out.waves += 1;
        }
        out.new_evals = store.len() - before;
        return Ok(out);
    }

    let max_waves = sampler.warm.div_ceil(sampler.n_s.total());
    while store.len() - before < sampler.warm && out.waves < max_waves {
        let starts = starts_for(sampler, bounds, store, &mut rng)?;
        for x in &starts {
            store.cached_evaluate(model, x, iteration, Source::SamplerStart)?;
        }
        let calls = AtomicU64::new(0);
        let hits = AtomicU64::new(0);
        let results = {
            let snapshot = &*store;
            let objective = |x: &[f64]| match snapshot.lookup(x) {
                Some(y) => {
                    hits.fetch_add(1, Ordering::Relaxed);
                    Ok(y)
                }
                None => {
                    calls.fetch_add(1, Ordering::Relaxed);
                    model.evaluate(x)
                }
            };
            run_ensemble(objective, &starts, bounds, solver)
        };
        store.count_calls(calls.into_inner(), hits.into_inner());
        let mut failure = None;
        for result in results {
            let evaluations = match &result {
                Ok(trace) => &trace.evaluations,
                Err(e) => &e.partial,
            };
            for e in evaluations {
                if store.lookup(&e.x).is_none() {
                    store.record(&e.x, e.f, iteration, Source::SolverStep)?;
                }
            }
            match result {
                Ok(trace) => out.traces.push(trace),
                Err(e) => {
                    failure.get_or_insert(e.error);
                }
            }
        }
        out.waves += 1;
        if let Some(error) = failure {
            return Err(error);
        }
    }
    out.new_evals = store.len() - before;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::model_by_id;

    #[test]
    fn random_batch_in_bounds_and_seeded() {
        let b = Bounds::uniform(2, 0.0, 10.0).unwrap();
        let a = random_batch(&b, 500, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a.len(), 500);
        assert!(a.iter().all(|x| b.contains(x)));
        assert_eq!(a, random_batch(&b, 500, &mut ChaCha8Rng::seed_from_u64(1)));
        assert_ne!(a, random_batch(&b, 500, &mut ChaCha8Rng::seed_from_u64(2)));
    }

    #[test]
    fn random_batch_mean() {
        let b = Bounds::uniform(1, 0.0, 10.0).unwrap();
        let xs = random_batch(&b, 100_000, &mut ChaCha8Rng::seed_from_u64(3));
        let mean = xs.iter().map(|x| x[0]).sum::<f64>() / xs.len() as f64;
        assert!((mean - 5.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn lattice_tuple_one_per_quadrant() {
        let b = Bounds::uniform(2, 0.0, 1.0).unwrap();
        let s = lattice_starts(&b, &EnsembleSize::PerDim(vec![2, 2]), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(s.len(), 4);
        let mut quadrants: Vec<(bool, bool)> = s.iter().map(|p| (p[0] >= 0.5, p[1] >= 0.5)).collect();
        quadrants.sort();
        quadrants.dedup();
        assert_eq!(quadrants.len(), 4);
    }

    #[test]
    fn lattice_scalar_distinct_cells() {
        let b = Bounds::uniform(3, 0.0, 1.0).unwrap();
        let s = lattice_starts(&b, &EnsembleSize::Scalar(8), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let mut cells: Vec<Vec<bool>> = s.iter().map(|p| p.iter().map(|v| *v >= 0.5).collect()).collect();
        cells.sort();
        cells.dedup();
        assert_eq!(cells.len(), 8);

        let b2 = Bounds::uniform(2, 0.0, 1.0).unwrap();
        let s = lattice_starts(&b2, &EnsembleSize::Scalar(5), &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let mut cells: Vec<(usize, usize)> = s.iter().map(|p| ((p[0] * 3.0) as usize, (p[1] * 3.0) as usize)).collect();
        cells.sort();
        cells.dedup();
        assert_eq!(cells.len(), 5);
        assert!(lattice_starts(&b2, &EnsembleSize::PerDim(vec![2]), &mut ChaCha8Rng::seed_from_u64(6)).is_err());
    }

    #[test]
    fn sparsity_empty_existing_takes_first_candidate() {
        let pool = vec![vec![0.3, 0.3], vec![0.9, 0.9], vec![0.1, 0.5]];
        assert_eq!(select_farthest(&pool, &[], 1), vec![vec![0.3, 0.3]]);
        assert_eq!(select_farthest(&pool, &[], 2), vec![vec![0.3, 0.3], vec![0.9, 0.9]]);
    }

    #[test]
    fn sparsity_avoids_center() {
        let b = Bounds::uniform(2, 0.0, 1.0).unwrap();
        let center = vec![vec![0.5, 0.5]];
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pick = sparsity_starts(&b, &center, 1, Some(2000), &mut rng);
        let half_diag = 0.5f64.hypot(0.5);
        let d = squared_distance(&pick[0], &center[0]).sqrt();
        assert!(d >= 0.95 * half_diag, "{d}");
    }

    #[test]
    fn config_validation() {
        let ok = SamplerConfig::default();
        ok.validate(2).unwrap();
        let bad = SamplerConfig { n_s: EnsembleSize::PerDim(vec![2, 2]), ..Default::default() };
        assert!(bad.validate(2).is_err());
        let lattice = SamplerConfig { strategy: Strategy::Lattice, ..bad };
        lattice.validate(2).unwrap();
        assert!(lattice.validate(3).is_err());
        assert!(SamplerConfig { warm: 0, ..Default::default() }.validate(2).is_err());
        assert!(SamplerConfig { pool_size: Some(3), ..Default::default() }.validate(2).is_err());
    }

    #[test]
    fn traditional_random_records_whole_batches() {
        let m = model_by_id("rosenbrock2", None).unwrap();
        let mut store = EvalStore::in_memory(2);
        let cfg = SamplerConfig::default();
        let out = sample_iteration(&*m, &mut store, &cfg, &SolverConfig::default(), m.bounds(), 0).unwrap();
        assert_eq!(out.new_evals, 1000);
        assert_eq!(store.len(), 1000);
        assert!(out.traces.is_empty());
        assert!(store.records().iter().all(|r| r.iteration == 0 && r.source == Source::SamplerStart));
    }

    #[test]
    fn directed_rastrigin_reaches_warm_deterministically() {
        let m = model_by_id("rastrigin2", None).unwrap();
        let cfg = SamplerConfig { directed: true, n_s: EnsembleSize::Scalar(16), rng_seed: 9, ..Default::default() };
        let run = || {
            let mut store = EvalStore::in_memory(2);
            let out = sample_iteration(&*m, &mut store, &cfg, &SolverConfig::default(), m.bounds(), 0).unwrap();
            (out, store)
        };
        let (out, store) = run();
        assert!(out.new_evals >= 1000);
        assert_eq!(out.traces.len(), 16 * out.waves);
        assert!(out.waves <= 1000usize.div_ceil(16));
        let starts = store.records().iter().filter(|r| r.source == Source::SamplerStart).count();
        assert_eq!(starts, 16 * out.waves);
        // Solvers re-probe their start and occasionally each other's points;
        // those repeats are served from the store and not re-recorded.
        let probes: usize = out.traces.iter().map(|t| t.len()).sum();
        assert!(store.len() <= probes + starts);
        assert!(store.records().iter().all(|r| m.bounds().contains(&r.x)));
        let (_, again) = run();
        assert_eq!(store.records(), again.records());
    }
}
