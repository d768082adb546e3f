//! Distances between a surrogate and data points.
//!
//! The vertical distance is `|ŷ(x′) − y|`. The graphical distance is the
//! smallest value of `g(x) = |ŷ(x) − y| + ‖x − x′‖` found among `x′`, the
//! linearized minimizer, level-set crossings along rays from `x′`, and a
//! bounded simplex search started at the best of those; it never exceeds the
//! vertical distance.

use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::Bounds;
use crate::error::{Error, Result};
use crate::optimize::{self, SolverConfig};
use crate::rbf::{squared_distance, Predictor};

/// Tolerance of the inner minimization.
pub const GRAPHICAL_TOL: f64 = 1e-6;
/// Iteration cap of the inner minimization.
pub const GRAPHICAL_MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMode {
    Vertical,
    #[default]
    Graphical,
}

impl FromStr for DistanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vertical" => Ok(DistanceMode::Vertical),
            "graphical" => Ok(DistanceMode::Graphical),
            other => Err(Error::InvalidArgument(format!("unknown distance mode `{other}` (expected vertical or graphical)"))),
        }
    }
}

impl std::fmt::Display for DistanceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DistanceMode::Vertical => "vertical",
            DistanceMode::Graphical => "graphical",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub per_point: Vec<f64>,
    pub ave: f64,
    pub max: f64,
    pub sum: f64,
}

impl DistanceReport {
    pub fn from_distances(per_point: Vec<f64>) -> Result<Self> {
        if per_point.is_empty() {
            return Err(Error::EmptyData);
        }
        if let Some(bad) = per_point.iter().find(|d| !(**d >= 0.0)) {
            return Err(Error::InvalidArgument(format!("distances must be non-negative, got {bad}")));
        }
        let sum = compensated_sum(&per_point);
        let max = per_point.iter().copied().fold(0.0, f64::max);
        let ave = sum / per_point.len() as f64;
        Ok(DistanceReport { per_point, ave, max, sum })
    }

    pub fn len(&self) -> usize {
        self.per_point.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_point.is_empty()
    }

    /// Writes `seq,delta_y` rows followed by `ave`, `max` and `sum` trailer
    /// rows. `seqs` labels the rows and must align with `per_point`.
    pub fn write_csv<W: Write>(&self, seqs: &[u64], mut out: W) -> Result<()> {
        Error::check_dim(self.per_point.len(), seqs.len())?;
        writeln!(out, "seq,delta_y")?;
        for (s, d) in seqs.iter().zip(&self.per_point) {
            writeln!(out, "{s},{d}")?;
        }
        writeln!(out, "ave,{}", self.ave)?;
        writeln!(out, "max,{}", self.max)?;
        writeln!(out, "sum,{}", self.sum)?;
        Ok(())
    }
}

/// Neumaier's compensated summation.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub fn vertical_distance<P: Predictor + ?Sized>(s: &P, x: &[f64], y: f64) -> Result<f64> {
    Error::check_dim(s.dim(), x.len())?;
    Ok((s.predict_point(x) - y).abs())
}

pub fn graphical_distance<P: Predictor + ?Sized>(s: &P, x: &[f64], y: f64, bounds: &Bounds) -> Result<f64> {
    Error::check_dim(s.dim(), x.len())?;
    Error::check_dim(bounds.dim(), x.len())?;
    bounds.check(x)?;
    let gap = s.predict_point(x) - y;
    let vertical = gap.abs();
    if vertical == 0.0 {
        return Ok(0.0);
    }
    let g = |z: &[f64]| (s.predict_point(z) - y).abs() + squared_distance(z, x).sqrt();
    let mut best = Candidate { z: x.to_vec(), g: vertical, scale: f64::INFINITY };

    // Linearizing ŷ at x′, g is smallest either at x′ itself (|∇ŷ| ≤ 1) or at
    // the projection of x′ onto the level set ŷ = y, a distance v/|∇ŷ| away.
    let grad = fd_gradient(s, x, bounds);
    let norm2: f64 = grad.iter().map(|d| d * d).sum();
    if norm2 > 1.0 {
        let mut z: Vec<f64> = x.iter().zip(&grad).map(|(xi, di)| xi - gap * di / norm2).collect();
        bounds.clip_in_place(&mut z);
        let gz = g(&z);
        best.offer(z, gz, f64::INFINITY);
    }
    if best.g <= GRAPHICAL_TOL {
        return Ok(best.g);
    }

    // g(z) ≥ ‖z − x′‖, so the minimizer lies within v of x′. When g has
    // several basins a search from x′ can settle in the wrong one, so rays
    // are scanned first and their level-set crossings become candidates.
    // Each ray stops at the incumbent g, which only shrinks.
    let dirs = ray_directions(&grad);
    let samples = (RAY_BUDGET / x.len()).max(MIN_RAY_SAMPLES);
    for dir in &dirs {
        scan_ray(s, x, y, dir, best.g, samples, bounds, &mut best);
    }

    let Candidate { z: seed, g: seed_g, scale } = best;
    let steps = if seed == x {
        simplex_steps(x, &grad, gap, vertical)
    } else {
        let h = scale.min(seed_g);
        seed.iter().map(|&v| h.max(1e-12 * (1.0 + v.abs()))).collect()
    };
    let Ok(simplex) = optimize::simplex_with_steps(&seed, bounds, &steps) else {
        return Ok(seed_g);
    };
    // Resolve x well below the scale of the simplex; a fixed 1e-6 would stop
    // the search before it starts whenever the minimizer is that close.
    let radius = steps.iter().map(|h| h.abs()).fold(f64::INFINITY, f64::min);
    let config = SolverConfig {
        xtol: GRAPHICAL_TOL.min(1e-3 * radius),
        ftol: GRAPHICAL_TOL,
        max_iterations: Some(GRAPHICAL_MAX_ITERATIONS),
        ..SolverConfig::default()
    };
    let mut out = seed_g;
    if let Ok(t) = optimize::nelder_mead_from_simplex(|z: &[f64]| Ok(g(z)), simplex, bounds, &config) {
        out = out.min(t.best_f);
    }
    Ok(out)
}

/// Best point of `g` so far, with the resolution it was found at.
struct Candidate {
    z: Vec<f64>,
    g: f64,
    scale: f64,
}

impl Candidate {
    fn offer(&mut self, z: Vec<f64>, g: f64, scale: f64) {
        if g < self.g {
            *self = Candidate { z, g, scale };
        }
    }
}

/// Samples per ray are `RAY_BUDGET / dim`, but at least `MIN_RAY_SAMPLES`.
const RAY_BUDGET: usize = 128;
const MIN_RAY_SAMPLES: usize = 16;
const LINE_REFINES: usize = 2;
const ZOOM_POINTS: usize = 4;
const ZOOM_LEVELS: usize = 8;

/// Both directions along the gradient, or along every axis where the
/// gradient vanishes.
fn ray_directions(grad: &[f64]) -> Vec<Vec<f64>> {
    let d = grad.len();
    let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        return [1.0, -1.0].iter().map(|sign| grad.iter().map(|v| sign * v / norm).collect()).collect();
    }
    let mut dirs = Vec::with_capacity(2 * d);
    for i in 0..d {
        for sign in [1.0, -1.0] {
            let mut e = vec![0.0; d];
            e[i] = sign;
            dirs.push(e);
        }
    }
    dirs
}

/// Walks `x + t·dir` for `t ∈ (0, radius]`, offering every sample and every
/// bisected sign change of `ŷ − y` as a candidate.
#[allow(clippy::too_many_arguments)]
fn scan_ray<P: Predictor + ?Sized>(
    s: &P,
    x: &[f64],
    y: f64,
    dir: &[f64],
    radius: f64,
    samples: usize,
    bounds: &Bounds,
    best: &mut Candidate,
) {
    // Only the in-bounds part of the ray is sampled; past the boundary every
    // point clips onto the same face.
    let reach = x
        .iter()
        .zip(dir)
        .enumerate()
        .map(|(i, (&xi, &di))| {
            if di > 0.0 {
                (bounds.hi()[i] - xi) / di
            } else if di < 0.0 {
                (bounds.lo()[i] - xi) / di
            } else {
                f64::INFINITY
            }
        })
        .fold(radius, f64::min);
    if reach <= 0.0 {
        return;
    }
    let spacing = reach / samples as f64;
    let line = Line { s, x, y, dir, bounds };
    let ts: Vec<f64> = (0..=samples).map(|k| spacing * k as f64).collect();
    let profile = line.scan(&ts, spacing, best, None);

    // Sampling alone misses narrow basins of g between samples; the lowest
    // few local minima of the profile are zoomed into along the ray.
    let g_at = |k: usize| profile[k].1;
    let mut minima: Vec<usize> = (1..profile.len())
        .filter(|&k| g_at(k) <= g_at(k - 1) && (k + 1 == profile.len() || g_at(k) <= g_at(k + 1)))
        .collect();
    minima.sort_by(|&a, &b| g_at(a).total_cmp(&g_at(b)));
    for &k in minima.iter().take(LINE_REFINES) {
        let hi = (k + 1).min(profile.len() - 1);
        let (mut a, mut b) = ((ts[k - 1], profile[k - 1].0), (ts[hi], profile[hi].0));
        for _ in 0..ZOOM_LEVELS {
            let h = (b.0 - a.0) / (ZOOM_POINTS + 1) as f64;
            let sub: Vec<f64> = (1..=ZOOM_POINTS).map(|i| a.0 + h * i as f64).collect();
            let found = line.scan(&sub, h, best, Some(a));
            if found.len() == sub.len() {
                if let Some(&(gap, _)) = found.last() {
                    line.check_crossing((sub[sub.len() - 1], gap), b, h, best);
                }
            }
            let Some(i) = (0..found.len()).min_by(|&i, &j| found[i].1.total_cmp(&found[j].1)) else {
                break;
            };
            let left = if i == 0 { a } else { (sub[i - 1], found[i - 1].0) };
            let right = if i + 1 < found.len() { (sub[i + 1], found[i + 1].0) } else if i + 1 == sub.len() { b } else { break };
            (a, b) = (left, right);
        }
    }
}

/// The ray `x + t·dir`, clipped to the bounds.
struct Line<'a, P: ?Sized> {
    s: &'a P,
    x: &'a [f64],
    y: f64,
    dir: &'a [f64],
    bounds: &'a Bounds,
}

impl<P: Predictor + ?Sized> Line<'_, P> {
    fn at(&self, t: f64) -> Vec<f64> {
        let mut z: Vec<f64> = self.x.iter().zip(self.dir).map(|(xi, di)| xi + t * di).collect();
        self.bounds.clip_in_place(&mut z);
        z
    }

    fn gap(&self, z: &[f64]) -> f64 {
        self.s.predict_point(z) - self.y
    }

    /// `(ŷ − y, g)` at every `t` in `ts` (ascending), offering each point
    /// and every bisected sign change of `ŷ − y` between neighbours, starting
    /// from the already known sample `prev`. Stops early past the incumbent.
    fn scan(&self, ts: &[f64], scale: f64, best: &mut Candidate, mut prev: Option<(f64, f64)>) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(ts.len());
        for &t in ts {
            // g ≥ t along the ray, so nothing past the incumbent can win.
            if t > best.g {
                break;
            }
            let z = self.at(t);
            let gap = self.gap(&z);
            if let Some(p) = prev {
                self.check_crossing(p, (t, gap), scale, best);
            }
            let g = gap.abs() + squared_distance(&z, self.x).sqrt();
            out.push((gap, g));
            best.offer(z, g, scale);
            prev = Some((t, gap));
        }
        out
    }

    fn check_crossing(&self, (t0, gap0): (f64, f64), (t1, gap1): (f64, f64), scale: f64, best: &mut Candidate) {
        if gap0.signum() != gap1.signum() {
            self.bisect(t0, t1, gap0, scale, best);
        }
    }

    fn bisect(&self, mut lo: f64, mut hi: f64, mut gap_lo: f64, scale: f64, best: &mut Candidate) {
        while hi - lo > 1e-3 * scale {
            let mid = 0.5 * (lo + hi);
            let gap_mid = self.gap(&self.at(mid));
            if gap_mid.signum() == gap_lo.signum() {
                lo = mid;
                gap_lo = gap_mid;
            } else {
                hi = mid;
            }
        }
        for t in [lo, hi] {
            let z = self.at(t);
            let g = self.gap(&z).abs() + squared_distance(&z, self.x).sqrt();
            best.offer(z, g, scale);
        }
    }
}

/// Initial simplex steps for the inner search: the minimizer lies about
/// `v / |∇ŷ|` from `x′` (never farther than `v`), toward the level set.
fn simplex_steps(x: &[f64], grad: &[f64], gap: f64, vertical: f64) -> Vec<f64> {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let radius = if norm > 1.0 { vertical / norm } else { vertical };
    x.iter()
        .zip(grad)
        .map(|(&xi, &gi)| {
            let size = radius.max(1e-12 * (1.0 + xi.abs()));
            if gi * gap > 0.0 {
                -size
            } else {
                size
            }
        })
        .collect()
}

fn fd_gradient<P: Predictor + ?Sized>(s: &P, x: &[f64], bounds: &Bounds) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-6 * (1.0 + x[i].abs());
            let hi = (x[i] + h).min(bounds.hi()[i]);
            let lo = (x[i] - h).max(bounds.lo()[i]);
            probe[i] = hi;
            let f_hi = s.predict_point(&probe);
            probe[i] = lo;
            let f_lo = s.predict_point(&probe);
            probe[i] = x[i];
            if hi > lo {
                (f_hi - f_lo) / (hi - lo)
            } else {
                0.0
            }
        })
        .collect()
}

pub fn distance<P: Predictor + ?Sized>(s: &P, x: &[f64], y: f64, mode: DistanceMode, bounds: &Bounds) -> Result<f64> {
    match mode {
        DistanceMode::Vertical => vertical_distance(s, x, y),
        DistanceMode::Graphical => graphical_distance(s, x, y, bounds),
    }
}

/// Per-point distances of `(xs[i], ys[i])`, computed in parallel; the result
/// is identical to sequential evaluation.
pub fn report<P: Predictor + ?Sized>(
    s: &P,
    xs: &[Vec<f64>],
    ys: &[f64],
    mode: DistanceMode,
    bounds: &Bounds,
) -> Result<DistanceReport> {
    Error::check_dim(xs.len(), ys.len())?;
    if xs.is_empty() {
        return Err(Error::EmptyData);
    }
    let per_point = xs
        .par_iter()
        .zip(ys.par_iter())
        .map(|(x, &y)| distance(s, x, y, mode, bounds))
        .collect::<Result<Vec<f64>>>()?;
    DistanceReport::from_distances(per_point)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear;

    impl Predictor for Linear {
        fn dim(&self) -> usize {
            1
        }
        fn predict_point(&self, x: &[f64]) -> f64 {
            x[0]
        }
    }

    struct Constant(f64, usize);

    impl Predictor for Constant {
        fn dim(&self) -> usize {
            self.1
        }
        fn predict_point(&self, _: &[f64]) -> f64 {
            self.0
        }
    }

    #[test]
    fn vertical_examples() {
        let s = Constant(3.0, 2);
        assert_eq!(vertical_distance(&s, &[0.5, 0.5], 5.0).unwrap(), 2.0);
        assert_eq!(vertical_distance(&s, &[0.5, 0.5], 3.0).unwrap(), 0.0);
        assert!(vertical_distance(&s, &[0.5], 3.0).is_err());
    }

    #[test]
    fn linear_surrogate_graphical() {
        let b = Bounds::uniform(1, -10.0, 10.0).unwrap();
        let d = graphical_distance(&Linear, &[0.0], 1.0, &b).unwrap();
        assert!((d - 1.0).abs() < 1e-6, "{d}");
        let on_graph = graphical_distance(&Linear, &[2.0], 2.0, &b).unwrap();
        assert_eq!(on_graph, 0.0);
    }

    #[test]
    fn graphical_shortcut_on_steep_surrogate() {
        struct Steep;
        impl Predictor for Steep {
            fn dim(&self) -> usize {
                1
            }
            fn predict_point(&self, x: &[f64]) -> f64 {
                100.0 * x[0]
            }
        }
        let b = Bounds::uniform(1, -1.0, 1.0).unwrap();
        // Moving 0.01 along x closes the gap of 1 in y.
        let d = graphical_distance(&Steep, &[0.0], 1.0, &b).unwrap();
        assert!((d - 0.01).abs() < 1e-5, "{d}");
    }

    #[test]
    fn report_aggregates() {
        let r = DistanceReport::from_distances(vec![1.0, 3.0]).unwrap();
        assert_eq!((r.ave, r.max, r.sum), (2.0, 3.0, 4.0));
        assert!(DistanceReport::from_distances(vec![]).is_err());
        assert!(DistanceReport::from_distances(vec![-1.0]).is_err());
        let b = Bounds::uniform(1, -10.0, 10.0).unwrap();
        assert!(matches!(report(&Linear, &[], &[], DistanceMode::Vertical, &b), Err(Error::EmptyData)));
    }

    #[test]
    fn compensated_sum_is_accurate() {
        let v = vec![1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(&v), 2.0);
    }

    #[test]
    fn csv_layout() {
        let r = DistanceReport::from_distances(vec![0.5, 0.25]).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&[3, 7], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "seq,delta_y\n3,0.5\n7,0.25\nave,0.375\nmax,0.5\nsum,0.75\n");
        assert!(r.write_csv(&[1], Vec::new()).is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("vertical".parse::<DistanceMode>().unwrap(), DistanceMode::Vertical);
        assert_eq!(DistanceMode::Graphical.to_string(), "graphical");
        assert!("other".parse::<DistanceMode>().is_err());
    }
}
