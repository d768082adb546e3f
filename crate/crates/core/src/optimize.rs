//! Bounded Nelder-Mead simplex search and a parallel ensemble runner.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::Bounds;
use crate::error::{Error, Result};

/// Relative step used to build the initial simplex.
pub const NONZERO_STEP: f64 = 0.05;
/// Absolute step for coordinates that are exactly zero.
pub const ZERO_STEP: f64 = 0.00025;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub xtol: f64,
    pub ftol: f64,
    /// Iteration cap; `None` means `200 * dim`.
    pub max_iterations: Option<usize>,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            xtol: 1e-4,
            ftol: 1e-4,
            max_iterations: None,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
        }
    }
}

impl SolverConfig {
    pub fn max_iterations_for(&self, dim: usize) -> usize {
        self.max_iterations.unwrap_or(200 * dim)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("solver: {what}")));
        if !(self.xtol > 0.0 && self.ftol > 0.0) {
            return bad("xtol and ftol must be positive");
        }
        if self.max_iterations == Some(0) {
            return bad("max_iterations must be at least 1");
        }
        if !(self.reflection > 0.0) {
            return bad("reflection must be positive");
        }
        if !(self.expansion > 1.0 && self.expansion > self.reflection) {
            return bad("expansion must exceed 1 and the reflection coefficient");
        }
        if !(self.contraction > 0.0 && self.contraction < 1.0) {
            return bad("contraction must lie in (0, 1)");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Tolerance,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub x: Vec<f64>,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    /// Every objective call, in call order.
    pub evaluations: Vec<Evaluation>,
    pub best_x: Vec<f64>,
    pub best_f: f64,
    pub iterations: usize,
    pub terminated_by: Termination,
    /// Best value after the initial simplex and after each iteration.
    pub best_history: Vec<f64>,
}

impl SolverTrace {
    pub fn len(&self) -> usize {
        self.evaluations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.evaluations.is_empty()
    }

    pub fn converged(&self) -> bool {
        self.terminated_by == Termination::Tolerance
    }
}

/// An objective failure, with everything evaluated up to that point.
#[derive(Debug)]
pub struct SolverError {
    pub error: Error,
    pub partial: Vec<Evaluation>,
}

impl std::fmt::Display for SolverError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "objective failed after {} evaluations: {}", self.partial.len(), self.error)
    }
}

impl std::error::Error for SolverError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// The default simplex: `x0` plus one vertex per coordinate, displaced by 5%
/// of the coordinate (or 0.00025 when it is zero). Displacements that the
/// bounds would swallow are flipped inward.
pub fn initial_simplex(x0: &[f64], bounds: &Bounds) -> Result<Vec<Vec<f64>>> {
    let steps: Vec<f64> = x0.iter().map(|&v| if v != 0.0 { NONZERO_STEP * v } else { ZERO_STEP }).collect();
    simplex_with_steps(x0, bounds, &steps)
}

/// Builds `x0` plus vertices `x0 + steps[i] e_i`, clipped to the bounds.
/// A step that clips back onto `x0` is retried in the opposite direction.
pub fn simplex_with_steps(x0: &[f64], bounds: &Bounds, steps: &[f64]) -> Result<Vec<Vec<f64>>> {
    Error::check_dim(bounds.dim(), x0.len())?;
    Error::check_dim(x0.len(), steps.len())?;
    bounds.check(x0)?;
    let mut simplex = vec![x0.to_vec()];
    for (i, &step) in steps.iter().enumerate() {
        if !(step.is_finite() && step != 0.0) {
            return Err(Error::InvalidArgument(format!("simplex step {i} must be finite and non-zero")));
        }
        let (lo, hi) = (bounds.lo()[i], bounds.hi()[i]);
        let forward = (x0[i] + step).clamp(lo, hi);
        let coord = if forward != x0[i] {
            forward
        } else {
            let back = (x0[i] - step).clamp(lo, hi);
            if back == x0[i] {
                return Err(Error::InvalidArgument(format!(
                    "bounds [{lo}, {hi}] too tight to build a simplex around {} in coordinate {i}",
                    x0[i]
                )));
            }
            back
        };
        let mut v = x0.to_vec();
        v[i] = coord;
        simplex.push(v);
    }
    Ok(simplex)
}

/// Minimizes `objective` from `x0` within `bounds`.
pub fn nelder_mead<F>(objective: F, x0: &[f64], bounds: &Bounds, config: &SolverConfig) -> Result<SolverTrace, SolverError>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let simplex = initial_simplex(x0, bounds).map_err(|error| SolverError { error, partial: Vec::new() })?;
    nelder_mead_from_simplex(objective, simplex, bounds, config)
}

/// Minimizes `objective` starting from an explicit simplex of `dim + 1`
/// in-bounds vertices.
pub fn nelder_mead_from_simplex<F>(
    mut objective: F,
    simplex: Vec<Vec<f64>>,
    bounds: &Bounds,
    config: &SolverConfig,
) -> Result<SolverTrace, SolverError>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let fail = |error| SolverError { error, partial: Vec::new() };
    config.validate().map_err(fail)?;
    let dim = bounds.dim();
    if simplex.len() != dim + 1 {
        return Err(fail(Error::InvalidArgument(format!("simplex needs {} vertices, got {}", dim + 1, simplex.len()))));
    }
    for v in &simplex {
        Error::check_dim(dim, v.len()).map_err(fail)?;
        bounds.check(v).map_err(fail)?;
    }
    let max_iterations = config.max_iterations_for(dim);

    let mut evaluations = Vec::new();
    let mut eval = |x: Vec<f64>, evaluations: &mut Vec<Evaluation>| -> Result<f64, SolverError> {
        match objective(&x) {
            Ok(f) => {
                evaluations.push(Evaluation { x, f });
                Ok(f)
            }
            Err(error) => Err(SolverError { error, partial: std::mem::take(evaluations) }),
        }
    };

    let mut verts: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    for v in simplex {
        let f = eval(v.clone(), &mut evaluations)?;
        verts.push((v, f));
    }
    verts.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut best_history = vec![verts[0].1];

    let (rho, chi, psi, sigma) = (config.reflection, config.expansion, config.contraction, config.shrink);
    let mut iterations = 0;
    let terminated_by = loop {
        let x_spread = verts[1..]
            .iter()
            .flat_map(|(v, _)| v.iter().zip(&verts[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let f_spread = verts[1..].iter().map(|(_, f)| (f - verts[0].1).abs()).fold(0.0, f64::max);
        if x_spread <= config.xtol && f_spread <= config.ftol {
            break Termination::Tolerance;
        }
        if iterations >= max_iterations {
            break Termination::MaxIterations;
        }

        let mut centroid = vec![0.0; dim];
        for (v, _) in &verts[..dim] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= dim as f64);
        let worst = verts[dim].0.clone();
        let point = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid.iter().zip(&worst).map(|(c, w)| (1.0 + t) * c - t * w).collect();
            bounds.clip_in_place(&mut p);
            p
        };

        let xr = point(rho);
        let fr = eval(xr.clone(), &mut evaluations)?;
        let mut shrink = false;
        if fr < verts[0].1 {
            let xe = point(rho * chi);
            let fe = eval(xe.clone(), &mut evaluations)?;
            verts[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < verts[dim - 1].1 {
            verts[dim] = (xr, fr);
        } else if fr < verts[dim].1 {
            let xc = point(psi * rho);
            let fc = eval(xc.clone(), &mut evaluations)?;
            if fc <= fr {
                verts[dim] = (xc, fc);
            } else {
                shrink = true;
            }
        } else {
            let xcc = point(-psi);
            let fcc = eval(xcc.clone(), &mut evaluations)?;
            if fcc < verts[dim].1 {
                verts[dim] = (xcc, fcc);
            } else {
                shrink = true;
            }
        }
        if shrink {
            let best = verts[0].0.clone();
            for j in 1..=dim {
                let mut v: Vec<f64> = best.iter().zip(&verts[j].0).map(|(b, x)| b + sigma * (x - b)).collect();
                bounds.clip_in_place(&mut v);
                let f = eval(v.clone(), &mut evaluations)?;
                verts[j] = (v, f);
            }
        }
        verts.sort_by(|a, b| a.1.total_cmp(&b.1));
        iterations += 1;
        best_history.push(verts[0].1);
    };

    let (best_x, best_f) = verts.swap_remove(0);
    Ok(SolverTrace { evaluations, best_x, best_f, iterations, terminated_by, best_history })
}

/// Runs one independent solver per start, concurrently. Results come back in
/// start order; a failing solver does not stop the others.
pub fn run_ensemble<F>(
    objective: F,
    starts: &[Vec<f64>],
    bounds: &Bounds,
    config: &SolverConfig,
) -> Vec<Result<SolverTrace, SolverError>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    starts.par_iter().map(|x0| nelder_mead(&objective, x0, bounds, config)).collect()
}
