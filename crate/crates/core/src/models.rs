//! Expensive-model interface plus the benchmark and synthetic plateau models.
//!
//! Every model here is a pure function of its input, so a single instance can
//! be shared across any number of worker threads.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bounds::Bounds;
use crate::error::{Error, Result};

/// Identity, dimension and search domain of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: String,
    pub dim: usize,
    pub bounds: Bounds,
    pub description: String,
}

impl ModelSpec {
    pub fn new(id: impl Into<String>, bounds: Bounds, description: impl Into<String>) -> Self {
        ModelSpec { id: id.into(), dim: bounds.dim(), bounds, description: description.into() }
    }
}

/// An expensive model `y(x)` with a scalar output.
pub trait Model: Send + Sync {
    fn spec(&self) -> &ModelSpec;

    /// Evaluates the model at `x`. Inputs outside [`ModelSpec::bounds`] are rejected.
    fn evaluate(&self, x: &[f64]) -> Result<f64>;

    fn dim(&self) -> usize {
        self.spec().dim
    }

    fn bounds(&self) -> &Bounds {
        &self.spec().bounds
    }
}

impl<M: Model + ?Sized> Model for Box<M> {
    fn spec(&self) -> &ModelSpec {
        (**self).spec()
    }
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        (**self).evaluate(x)
    }
}

impl<M: Model + ?Sized> Model for Arc<M> {
    fn spec(&self) -> &ModelSpec {
        (**self).spec()
    }
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        (**self).evaluate(x)
    }
}

/// `10 d + Σ [x_i² − 10 cos(2π x_i)]`.
pub fn rastrigin(x: &[f64], d: usize) -> Result<f64> {
    Error::check_dim(d, x.len())?;
    Ok(10.0 * d as f64 + x.iter().map(|&v| v * v - 10.0 * (2.0 * PI * v).cos()).sum::<f64>())
}

/// `Σ_{i<d} [100 (x_{i+1} − x_i²)² + (1 − x_i)²]`, defined for `d ≥ 2`.
pub fn rosenbrock(x: &[f64], d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::InvalidArgument("rosenbrock needs d >= 2".into()));
    }
    Error::check_dim(d, x.len())?;
    Ok(x.windows(2).map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2)).sum())
}

/// Two-dimensional Easom function; a single well of depth −1 at `(π, π)`.
pub fn easom(x: &[f64]) -> Result<f64> {
    Error::check_dim(2, x.len())?;
    let (a, b) = (x[0], x[1]);
    Ok(-a.cos() * b.cos() * (-((a - PI).powi(2) + (b - PI).powi(2))).exp())
}

/// `−Σ_i sin(x_i) sin^{2m}(i x_i² / π)` with one-based `i`.
pub fn michalewicz(x: &[f64], m: f64) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::DimensionMismatch { expected: 2, got: 0 });
    }
    if !(m > 0.0) {
        return Err(Error::InvalidArgument(format!("michalewicz steepness must be positive, got {m}")));
    }
    Ok(-x
        .iter()
        .enumerate()
        .map(|(i, &v)| v.sin() * ((i as f64 + 1.0) * v * v / PI).sin().powf(2.0 * m))
        .sum::<f64>())
}

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HARTMANN_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const HARTMANN_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

/// Six-dimensional Hartmann function with the standard published constants.
pub fn hartmann6(x: &[f64]) -> Result<f64> {
    Error::check_dim(6, x.len())?;
    let mut total = 0.0;
    for ((alpha, a), p) in HARTMANN_ALPHA.iter().zip(&HARTMANN_A).zip(&HARTMANN_P) {
        let inner: f64 = (0..6).map(|j| a[j] * (x[j] - p[j]).powi(2)).sum();
        total += alpha * (-inner).exp();
    }
    Ok(-total)
}

/// Parameters of the synthetic phase-transition pressure surface.
///
/// Pressure follows `a n^γ1` below the plateau onset `n1(y_p)`, stays constant
/// up to `n2(y_p) = n1(y_p) + width`, then rises again as `(n − n2)^γ2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauParams {
    pub gamma_low: f64,
    pub gamma_high: f64,
    pub amplitude: f64,
    pub onset_intercept: f64,
    pub onset_slope: f64,
    pub width: f64,
}

impl Default for PlateauParams {
    fn default() -> Self {
        PlateauParams {
            gamma_low: 2.0,
            gamma_high: 3.0,
            amplitude: 1.0,
            onset_intercept: 0.25,
            onset_slope: 0.5,
            width: 0.3,
        }
    }
}

impl PlateauParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.gamma_low > 0.0
            && self.gamma_high > 0.0
            && self.amplitude > 0.0
            && self.onset_slope > 0.0
            && self.width > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid plateau parameters {self:?}")))
        }
    }

    /// Density at which the plateau starts.
    pub fn onset(&self, y_p: f64) -> f64 {
        self.onset_intercept + self.onset_slope * y_p
    }

    /// Density at which the plateau ends.
    pub fn end(&self, y_p: f64) -> f64 {
        self.onset(y_p) + self.width
    }
}

pub const PLATEAU_NB_RANGE: (f64, f64) = (0.04, 1.6);
pub const PLATEAU_YP_RANGE: (f64, f64) = (0.01, 0.6);

/// Pressure of the synthetic plateau model at density `n_b` and fraction `y_p`.
pub fn plateau_pressure(n_b: f64, y_p: f64, params: &PlateauParams) -> Result<f64> {
    let check = |v: f64, (lo, hi): (f64, f64), index| {
        if lo <= v && v <= hi {
            Ok(())
        } else {
            Err(Error::OutOfBounds { index, value: v, lo, hi })
        }
    };
    check(n_b, PLATEAU_NB_RANGE, 0)?;
    check(y_p, PLATEAU_YP_RANGE, 1)?;
    let n1 = params.onset(y_p);
    let n2 = params.end(y_p);
    let plateau = params.amplitude * n1.powf(params.gamma_low);
    Ok(if n_b <= n1 {
        params.amplitude * n_b.powf(params.gamma_low)
    } else if n_b <= n2 {
        plateau
    } else {
        plateau + params.amplitude * (n_b - n2).powf(params.gamma_high)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Rastrigin,
    Rosenbrock,
    Easom,
    Michalewicz,
    Hartmann6,
}

/// One of the analytic benchmark functions wrapped as a [`Model`].
#[derive(Debug, Clone)]
pub struct Benchmark {
    spec: ModelSpec,
    kind: Kind,
}

impl Model for Benchmark {
    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.spec.bounds.check(x)?;
        match self.kind {
            Kind::Rastrigin => rastrigin(x, self.spec.dim),
            Kind::Rosenbrock => rosenbrock(x, self.spec.dim),
            Kind::Easom => easom(x),
            Kind::Michalewicz => michalewicz(x, 10.0),
            Kind::Hartmann6 => hartmann6(x),
        }
    }
}

/// The plateau surface as a two-input [`Model`] over `(n_b, y_p)`.
#[derive(Debug, Clone)]
pub struct PlateauModel {
    spec: ModelSpec,
    pub params: PlateauParams,
}

impl PlateauModel {
    pub fn new(params: PlateauParams) -> Result<Self> {
        params.validate()?;
        let bounds = Bounds::new(
            vec![PLATEAU_NB_RANGE.0, PLATEAU_YP_RANGE.0],
            vec![PLATEAU_NB_RANGE.1, PLATEAU_YP_RANGE.1],
        )?;
        Ok(PlateauModel {
            spec: ModelSpec::new("plateau", bounds, "synthetic pressure plateau over (n_b, y_p)"),
            params,
        })
    }
}

impl Model for PlateauModel {
    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.spec.bounds.check(x)?;
        plateau_pressure(x[0], x[1], &self.params)
    }
}

/// Wraps an arbitrary closure as a model, e.g. for user-supplied simulations.
pub struct FnModel<F> {
    spec: ModelSpec,
    f: F,
}

impl<F> FnModel<F>
where
    F: Fn(&[f64]) -> Result<f64> + Send + Sync,
{
    pub fn new(spec: ModelSpec, f: F) -> Self {
        FnModel { spec, f }
    }
}

impl<F> fmt::Debug for FnModel<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnModel").field("spec", &self.spec).finish_non_exhaustive()
    }
}

impl<F> Model for FnModel<F>
where
    F: Fn(&[f64]) -> Result<f64> + Send + Sync,
{
    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.spec.bounds.check(x)?;
        (self.f)(x)
    }
}

/// Identifiers accepted by [`model_by_id`].
pub const MODEL_IDS: [&str; 7] =
    ["rastrigin2", "rosenbrock2", "rosenbrock8", "easom", "michalewicz2", "hartmann6", "plateau"];

/// Default search domain of a registered model.
pub fn default_bounds(id: &str) -> Result<Bounds> {
    match id {
        "rastrigin2" | "rosenbrock2" | "easom" | "michalewicz2" => Bounds::uniform(2, 0.0, 10.0),
        "rosenbrock8" => Bounds::uniform(8, 0.0, 10.0),
        "hartmann6" => Bounds::uniform(6, -1.0, 1.0),
        "plateau" => Ok(PlateauModel::new(PlateauParams::default())?.spec.bounds),
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

/// Looks up a registered model, optionally overriding its default bounds.
pub fn model_by_id(id: &str, bounds: Option<Bounds>) -> Result<Arc<dyn Model>> {
    let bounds = match bounds {
        Some(b) => b,
        None => default_bounds(id)?,
    };
    let (kind, dim, description) = match id {
        "rastrigin2" => (Kind::Rastrigin, 2, "2-d Rastrigin"),
        "rosenbrock2" => (Kind::Rosenbrock, 2, "2-d Rosenbrock"),
        "rosenbrock8" => (Kind::Rosenbrock, 8, "8-d Rosenbrock"),
        "easom" => (Kind::Easom, 2, "2-d Easom"),
        "michalewicz2" => (Kind::Michalewicz, 2, "2-d Michalewicz (m = 10)"),
        "hartmann6" => (Kind::Hartmann6, 6, "6-d Hartmann"),
        "plateau" => {
            let mut model = PlateauModel::new(PlateauParams::default())?;
            Error::check_dim(2, bounds.dim())?;
            model.spec.bounds = bounds;
            return Ok(Arc::new(model));
        }
        other => return Err(Error::UnknownModel(other.to_string())),
    };
    Error::check_dim(dim, bounds.dim())?;
    Ok(Arc::new(Benchmark { spec: ModelSpec::new(id, bounds, description), kind }))
}
