//! Thin-plate radial basis function surrogates.
//!
//! A surrogate is the expansion `ŷ(x) = Σ_j β_j φ(‖x − c_j‖)` with
//! `φ(r) = r² ln r`. Coefficients solve `(M − smooth·I) β = Y` where
//! `M_ij = φ(‖c_i − c_j‖)`. Centers are the training inputs, optionally
//! perturbed by a tiny seeded Gaussian jitter so that repeated inputs do not
//! make `M` singular.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, FitError, Result};
use crate::linalg::LuSolver;

/// Default fit-size cap; larger data sets are fitted on a subsample.
pub const DEFAULT_MAX_CENTERS: usize = 4000;

/// Format tag written into every serialized surrogate.
pub const FORMAT_NAME: &str = "asymptote-rbf";
pub const FORMAT_VERSION: u32 = 1;

/// Anything that can be evaluated like a surrogate.
pub trait Predictor: Sync {
    fn dim(&self) -> usize;

    /// Evaluates at `x`; callers guarantee `x.len() == self.dim()`.
    fn predict_point(&self, x: &[f64]) -> f64;
}

/// `r² ln r`, with the limit value 0 at `r = 0`.
pub fn thin_plate(r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be non-negative, got {r}")));
    }
    Ok(if r == 0.0 { 0.0 } else { r * r * r.ln() })
}

/// Thin-plate kernel evaluated from a squared radius.
#[inline]
fn thin_plate_sq(r2: f64) -> f64 {
    if r2 > 0.0 {
        0.5 * r2 * r2.ln()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    ThinPlate,
}

/// Surrogate hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    /// Diagonal relaxation subtracted from the system matrix.
    pub smooth: f64,
    /// Jitter scale relative to each input dimension's data range.
    pub noise_sigma: f64,
    pub noise_seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams { smooth: 0.0, noise_sigma: 1e-8, noise_seed: 0 }
    }
}

impl Hyperparams {
    /// Plain interpolation: no smoothing, no jitter.
    pub fn exact() -> Self {
        Hyperparams { smooth: 0.0, noise_sigma: 0.0, noise_seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.smooth >= 0.0 && self.noise_sigma >= 0.0 && self.smooth.is_finite() && self.noise_sigma.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("hyperparameters must be finite and non-negative: {self:?}")))
        }
    }
}

/// Identifies the data a surrogate was trained against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub n: usize,
    pub hash: String,
}

impl Fingerprint {
    /// SHA-256 over the bit patterns of every `(x, y)` pair, in order.
    pub fn of(xs: &[Vec<f64>], ys: &[f64]) -> Self {
        let mut h = Sha256::new();
        for (x, y) in xs.iter().zip(ys) {
            for v in x {
                h.update(v.to_bits().to_le_bytes());
            }
            h.update(y.to_bits().to_le_bytes());
        }
        let hash = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Fingerprint { n: ys.len(), hash }
    }
}

/// A fitted thin-plate RBF surrogate. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    dim: usize,
    centers: Vec<f64>,
    coefficients: Vec<f64>,
    kernel: Kernel,
    hyper: Hyperparams,
    fingerprint: Fingerprint,
}

fn validate_data(xs: &[Vec<f64>], ys: &[f64]) -> Result<usize> {
    let first = xs.first().ok_or(Error::EmptyData)?;
    let dim = first.len();
    if dim == 0 {
        return Err(Error::InvalidArgument("inputs must have at least one coordinate".into()));
    }
    Error::check_dim(xs.len(), ys.len())?;
    for x in xs {
        Error::check_dim(dim, x.len())?;
    }
    if xs.iter().flatten().chain(ys).any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite.into());
    }
    if xs.len() < dim + 1 {
        return Err(FitError::TooFewPoints { got: xs.len(), required: dim + 1, dim }.into());
    }
    Ok(dim)
}

impl Surrogate {
    /// Fits a surrogate to every `(xs[j], ys[j])` pair.
    pub fn fit(xs: &[Vec<f64>], ys: &[f64], hyper: Hyperparams) -> Result<Self> {
        let dim = validate_data(xs, ys)?;
        hyper.validate()?;
        let fingerprint = Fingerprint::of(xs, ys);
        Self::fit_inner(xs, ys, dim, hyper, fingerprint)
    }

    /// Like [`Surrogate::fit`], but when there are more than `max_centers`
    /// points only a subsample is used as centers: every point nearest to a
    /// location in `keep`, then farthest-point selection for the rest. The
    /// fingerprint always covers the full data set.
    pub fn fit_capped(
        xs: &[Vec<f64>],
        ys: &[f64],
        hyper: Hyperparams,
        max_centers: usize,
        keep: &[Vec<f64>],
    ) -> Result<Self> {
        let dim = validate_data(xs, ys)?;
        hyper.validate()?;
        let fingerprint = Fingerprint::of(xs, ys);
        if xs.len() <= max_centers {
            return Self::fit_inner(xs, ys, dim, hyper, fingerprint);
        }
        if max_centers < dim + 1 {
            return Err(FitError::TooFewPoints { got: max_centers, required: dim + 1, dim }.into());
        }
        let chosen = subsample_indices(xs, max_centers, keep);
        let sub_x: Vec<Vec<f64>> = chosen.iter().map(|&i| xs[i].clone()).collect();
        let sub_y: Vec<f64> = chosen.iter().map(|&i| ys[i]).collect();
        Self::fit_inner(&sub_x, &sub_y, dim, hyper, fingerprint)
    }

    fn fit_inner(xs: &[Vec<f64>], ys: &[f64], dim: usize, hyper: Hyperparams, fingerprint: Fingerprint) -> Result<Self> {
        let n = xs.len();
        let centers = jittered_centers(xs, dim, &hyper);
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            let ci = &centers[i * dim..(i + 1) * dim];
            m[i * n + i] = -hyper.smooth;
            for j in (i + 1)..n {
                let cj = &centers[j * dim..(j + 1) * dim];
                let v = thin_plate_sq(squared_distance(ci, cj));
                m[i * n + j] = v;
                m[j * n + i] = v;
            }
        }
        let lu = LuSolver::factor(&m, n)?;
        let coefficients = lu.solve(ys);
        if coefficients.iter().any(|v| !v.is_finite()) {
            return Err(FitError::NonFinite.into());
        }
        Ok(Surrogate { dim, centers, coefficients, kernel: Kernel::ThinPlate, hyper, fingerprint })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn fingerprint(&self) -> &Fingerprint {
        &self.fingerprint
    }

    pub fn center(&self, j: usize) -> &[f64] {
        &self.centers[j * self.dim..(j + 1) * self.dim]
    }

    pub fn centers(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.centers.chunks_exact(self.dim)
    }

    /// True when the surrogate was trained on something other than exactly
    /// `(xs, ys)`.
    pub fn is_stale(&self, xs: &[Vec<f64>], ys: &[f64]) -> bool {
        self.fingerprint != Fingerprint::of(xs, ys)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Error::check_dim(self.dim, x.len())?;
        Ok(self.predict_point(x))
    }

    pub fn serialize(&self) -> Result<String> {
        let doc = SurrogateDoc {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            kernel: self.kernel,
            dim: self.dim,
            centers: self.centers().map(<[f64]>::to_vec).collect(),
            coefficients: self.coefficients.clone(),
            hyper: self.hyper,
            fingerprint: self.fingerprint.clone(),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn deserialize(text: &str) -> Result<Self> {
        let doc: SurrogateDoc = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if doc.format != FORMAT_NAME {
            return Err(Error::Format(format!("unexpected format `{}`", doc.format)));
        }
        if doc.version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "format version {} not supported (expected {FORMAT_VERSION})",
                doc.version
            )));
        }
        if doc.dim == 0 || doc.centers.len() != doc.coefficients.len() || doc.centers.is_empty() {
            return Err(Error::Format("centers and coefficients must be non-empty and equally long".into()));
        }
        if doc.centers.iter().any(|c| c.len() != doc.dim) {
            return Err(Error::Format(format!("every center must have dimension {}", doc.dim)));
        }
        doc.hyper.validate()?;
        Ok(Surrogate {
            dim: doc.dim,
            centers: doc.centers.into_iter().flatten().collect(),
            coefficients: doc.coefficients,
            kernel: doc.kernel,
            hyper: doc.hyper,
            fingerprint: doc.fingerprint,
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.serialize()?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::deserialize(&std::fs::read_to_string(path)?)
    }
}

impl Predictor for Surrogate {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict_point(&self, x: &[f64]) -> f64 {
        self.centers
            .chunks_exact(self.dim)
            .zip(&self.coefficients)
            .map(|(c, b)| b * thin_plate_sq(squared_distance(x, c)))
            .sum()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SurrogateDoc {
    format: String,
    version: u32,
    kernel: Kernel,
    dim: usize,
    centers: Vec<Vec<f64>>,
    coefficients: Vec<f64>,
    hyper: Hyperparams,
    fingerprint: Fingerprint,
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn jittered_centers(xs: &[Vec<f64>], dim: usize, hyper: &Hyperparams) -> Vec<f64> {
    let mut centers: Vec<f64> = xs.iter().flatten().copied().collect();
    if hyper.noise_sigma == 0.0 {
        return centers;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.noise_seed);
    let sigmas: Vec<f64> = (0..dim)
        .map(|k| {
            let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x[k]), hi.max(x[k])));
            hyper.noise_sigma * (hi - lo)
        })
        .collect();
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    for c in centers.chunks_exact_mut(dim) {
        for (v, s) in c.iter_mut().zip(&sigmas) {
            let z: f64 = unit.sample(&mut rng);
            *v += s * z;
        }
    }
    centers
}

/// Indices of at most `k` points: for each `keep` location its nearest data
/// point, then greedy farthest-point selection until `k` are chosen.
pub(crate) fn subsample_indices(xs: &[Vec<f64>], k: usize, keep: &[Vec<f64>]) -> Vec<usize> {
    let n = xs.len();
    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; n];
    for loc in keep {
        if chosen.len() >= k {
            break;
        }
        let nearest = (0..n)
            .min_by(|&a, &b| squared_distance(&xs[a], loc).total_cmp(&squared_distance(&xs[b], loc)))
            .expect("non-empty data");
        if !taken[nearest] {
            taken[nearest] = true;
            chosen.push(nearest);
        }
    }
    if chosen.is_empty() {
        taken[0] = true;
        chosen.push(0);
    }
    let mut nearest_sq = vec![f64::INFINITY; n];
    for &c in &chosen {
        for i in 0..n {
            nearest_sq[i] = nearest_sq[i].min(squared_distance(&xs[i], &xs[c]));
        }
    }
    while chosen.len() < k {
        let mut best = usize::MAX;
        let mut best_d = -1.0;
        for i in 0..n {
            if !taken[i] && nearest_sq[i] > best_d {
                best = i;
                best_d = nearest_sq[i];
            }
        }
        if best == usize::MAX {
            break;
        }
        taken[best] = true;
        chosen.push(best);
        for i in 0..n {
            nearest_sq[i] = nearest_sq[i].min(squared_distance(&xs[i], &xs[best]));
        }
    }
    chosen.sort_unstable();
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::rastrigin;
    use rand::Rng;

    fn random_points(n: usize, dim: usize, lo: f64, hi: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..dim).map(|_| rng.random_range(lo..hi)).collect()).collect()
    }

    #[test]
    fn thin_plate_values() {
        assert_eq!(thin_plate(0.0).unwrap(), 0.0);
        assert_eq!(thin_plate(1.0).unwrap(), 0.0);
        let e = std::f64::consts::E;
        assert!((thin_plate(e).unwrap() - 7.389056).abs() < 1e-6);
        assert!(thin_plate(-1.0).is_err());
        assert!(thin_plate(f64::NAN).is_err());
        for &r in &[0.1, 0.5, 2.0, 17.0] {
            assert!((thin_plate(r).unwrap() - thin_plate_sq(r * r)).abs() < 1e-12 * (1.0 + r * r * r.ln().abs()));
        }
    }

    #[test]
    fn duplicate_point_is_singular() {
        let xs = vec![vec![1.0, 2.0]; 4];
        let ys = vec![3.0; 4];
        let err = Surrogate::fit(&xs, &ys, Hyperparams::exact()).unwrap_err();
        assert!(matches!(err, Error::Fit(FitError::Singular { .. }) | Error::Fit(FitError::IllConditioned { .. })), "{err}");
    }

    #[test]
    fn too_few_points_and_mismatches() {
        let xs = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        assert!(matches!(
            Surrogate::fit(&xs, &[0.0, 1.0], Hyperparams::exact()),
            Err(Error::Fit(FitError::TooFewPoints { required: 3, .. }))
        ));
        let xs = vec![vec![0.0, 0.0], vec![1.0], vec![0.0, 1.0]];
        assert!(matches!(Surrogate::fit(&xs, &[0.0; 3], Hyperparams::exact()), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(Surrogate::fit(&[], &[], Hyperparams::exact()), Err(Error::EmptyData)));
        let bad = Hyperparams { smooth: -1.0, ..Hyperparams::exact() };
        let xs = random_points(5, 2, 0.0, 1.0, 1);
        assert!(Surrogate::fit(&xs, &[0.0; 5], bad).is_err());
    }

    #[test]
    fn interpolates_rastrigin_samples() {
        let xs = random_points(50, 2, 0.0, 10.0, 7);
        let ys: Vec<f64> = xs.iter().map(|x| rastrigin(x, 2).unwrap()).collect();
        let s = Surrogate::fit(&xs, &ys, Hyperparams::exact()).unwrap();
        let range = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - ys.iter().cloned().fold(f64::INFINITY, f64::min);
        for (x, y) in xs.iter().zip(&ys) {
            assert!((s.predict(x).unwrap() - y).abs() <= 1e-6 * range);
        }
        assert!(s.predict(&[1.0]).is_err());
    }

    #[test]
    fn fit_is_deterministic() {
        let xs = random_points(40, 3, -1.0, 1.0, 3);
        let ys: Vec<f64> = xs.iter().map(|x| x.iter().map(|v| v.sin()).sum()).collect();
        let h = Hyperparams { noise_seed: 11, ..Hyperparams::default() };
        let a = Surrogate::fit(&xs, &ys, h).unwrap();
        let b = Surrogate::fit(&xs, &ys, h).unwrap();
        let bits = |s: &Surrogate| s.coefficients().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = Surrogate::fit(&xs, &ys, Hyperparams { noise_seed: 12, ..h }).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn constant_data_is_reproduced_at_centers() {
        let xs = random_points(30, 2, -3.0, 3.0, 5);
        let ys = vec![4.5; 30];
        let s = Surrogate::fit(&xs, &ys, Hyperparams::exact()).unwrap();
        for x in &xs {
            assert!((s.predict(x).unwrap() - 4.5).abs() <= 1e-8);
        }
    }

    #[test]
    fn rosenbrock_grid_minimum() {
        let n = 30;
        let mut xs = Vec::new();
        for i in 0..n {
            for j in 0..n {
                xs.push(vec![-2.0 + 4.0 * i as f64 / (n - 1) as f64, -2.0 + 4.0 * j as f64 / (n - 1) as f64]);
            }
        }
        let ys: Vec<f64> = xs.iter().map(|x| crate::models::rosenbrock(x, 2).unwrap()).collect();
        let s = Surrogate::fit(&xs, &ys, Hyperparams::exact()).unwrap();
        let at_min = s.predict(&[1.0, 1.0]).unwrap();
        assert!(at_min.abs() <= 0.5, "{at_min}");
    }

    #[test]
    fn jitter_scale_follows_data_range() {
        let xs = vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![0.0, 1.0], vec![10.0, 1.0]];
        let h = Hyperparams { smooth: 0.0, noise_sigma: 1e-3, noise_seed: 1 };
        let c = jittered_centers(&xs, 2, &h);
        let max_dx = xs.iter().zip(c.chunks(2)).map(|(x, c)| (x[0] - c[0]).abs()).fold(0.0, f64::max);
        let max_dy = xs.iter().zip(c.chunks(2)).map(|(x, c)| (x[1] - c[1]).abs()).fold(0.0, f64::max);
        assert!(max_dx > 0.0 && max_dx < 10.0 * 1e-3 * 6.0);
        assert!(max_dy > 0.0 && max_dy < 1e-3 * 6.0);
        assert!(max_dx > max_dy);
    }

    #[test]
    fn serialization_round_trip() {
        let xs = random_points(25, 2, 0.0, 1.0, 9);
        let ys: Vec<f64> = xs.iter().map(|x| x[0] * x[1]).collect();
        let s = Surrogate::fit(&xs, &ys, Hyperparams { noise_seed: 4, ..Default::default() }).unwrap();
        let text = s.serialize().unwrap();
        let back = Surrogate::deserialize(&text).unwrap();
        assert_eq!(s, back);
        for p in random_points(100, 2, 0.0, 1.0, 10) {
            assert_eq!(s.predict(&p).unwrap().to_bits(), back.predict(&p).unwrap().to_bits());
        }
        assert!(Surrogate::deserialize(&text[..text.len() / 2]).is_err());
        let bumped = text.replace("\"version\": 1", "\"version\": 2");
        assert!(Surrogate::deserialize(&bumped).unwrap_err().to_string().contains("version"));
    }

    #[test]
    fn staleness_detects_extra_records() {
        let mut xs = random_points(10, 2, 0.0, 1.0, 2);
        let mut ys: Vec<f64> = xs.iter().map(|x| x[0]).collect();
        let s = Surrogate::fit(&xs, &ys, Hyperparams::exact()).unwrap();
        assert!(!s.is_stale(&xs, &ys));
        xs.push(vec![0.5, 0.5]);
        ys.push(0.5);
        assert!(s.is_stale(&xs, &ys));
    }

    #[test]
    fn capped_fit_keeps_requested_locations() {
        let xs = random_points(200, 2, 0.0, 1.0, 21);
        let ys: Vec<f64> = xs.iter().map(|x| x[0] + x[1]).collect();
        let keep = vec![xs[137].clone()];
        let s = Surrogate::fit_capped(&xs, &ys, Hyperparams::exact(), 50, &keep).unwrap();
        assert_eq!(s.len(), 50);
        assert!(s.centers().any(|c| c == xs[137].as_slice()));
        assert_eq!(s.fingerprint().n, 200);
        let idx = subsample_indices(&xs, 50, &[]);
        assert_eq!(idx.len(), 50);
        let mut dedup = idx.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 50);
    }
}
