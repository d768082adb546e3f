//! Python bindings: models, surrogates, distances, the simplex solver and
//! whole experiment runs.

use std::path::PathBuf;
use std::sync::Arc;

use asymptote::distance::{self, report};
use asymptote::experiment::{run_seed, seed_dir, RunKind};
use asymptote::optimize;
use asymptote::workflow::{run_asymptotic, run_single};
use asymptote::{Bounds, DistanceMode, EvalStore, ExperimentConfig, SolverConfig, SurrogateDb, WorkflowResult};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: asymptote::Error) -> PyErr {
    match e {
        asymptote::Error::Io(_) | asymptote::Error::Fit(_) | asymptote::Error::TrainFailure(_) | asymptote::Error::Model(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn mode(name: &str) -> PyResult<DistanceMode> {
    match name {
        "vertical" => Ok(DistanceMode::Vertical),
        "graphical" => Ok(DistanceMode::Graphical),
        other => Err(PyValueError::new_err(format!("mode must be 'vertical' or 'graphical', not {other:?}"))),
    }
}

fn bounds(lo: Vec<f64>, hi: Vec<f64>) -> PyResult<Bounds> {
    Bounds::new(lo, hi).map_err(err)
}

/// A benchmark model looked up by id, e.g. `Model("rosenbrock2")`, optionally
/// on a replacement box.
#[pyclass(module = "asymptote", frozen)]
struct Model {
    inner: Arc<dyn asymptote::Model>,
}

#[pymethods]
impl Model {
    #[new]
    #[pyo3(signature = (id, lo=None, hi=None))]
    fn new(id: &str, lo: Option<Vec<f64>>, hi: Option<Vec<f64>>) -> PyResult<Self> {
        let b = match (lo, hi) {
            (Some(lo), Some(hi)) => Some(bounds(lo, hi)?),
            (None, None) => None,
            _ => return Err(PyValueError::new_err("give both lo and hi, or neither")),
        };
        Ok(Model { inner: asymptote::model_by_id(id, b).map_err(err)? })
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.spec().id.clone()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// `(lo, hi)` corner lists.
    #[getter]
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let b = self.inner.bounds();
        (b.lo().to_vec(), b.hi().to_vec())
    }

    fn __call__(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.evaluate(&x).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Model({:?})", self.inner.spec().id)
    }
}

/// Ids accepted by `Model`.
#[pyfunction]
fn model_ids() -> Vec<&'static str> {
    asymptote::models::MODEL_IDS.to_vec()
}

/// A fitted thin-plate surrogate.
#[pyclass(module = "asymptote", frozen)]
struct Surrogate {
    inner: asymptote::Surrogate,
}

#[pymethods]
impl Surrogate {
    /// Fits `ys` at `xs`. `smooth=0, noise_sigma=0` interpolates exactly.
    #[staticmethod]
    #[pyo3(signature = (xs, ys, smooth=0.0, noise_sigma=0.0, noise_seed=0))]
    fn fit(py: Python<'_>, xs: Vec<Vec<f64>>, ys: Vec<f64>, smooth: f64, noise_sigma: f64, noise_seed: u64) -> PyResult<Self> {
        let hyper = asymptote::Hyperparams { smooth, noise_sigma, noise_seed };
        let inner = py.detach(|| asymptote::Surrogate::fit(&xs, &ys, hyper)).map_err(err)?;
        Ok(Surrogate { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Surrogate { inner: asymptote::Surrogate::deserialize(text).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Surrogate { inner: asymptote::Surrogate::load(path).map_err(err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.serialize().map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.predict(&x).map_err(err)
    }

    fn predict_many(&self, py: Python<'_>, xs: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        py.detach(|| xs.iter().map(|x| self.inner.predict(x)).collect::<asymptote::Result<Vec<f64>>>()).map_err(err)
    }

    /// Distance from `(x, y)` to the surrogate's graph, or `|s(x) - y|` in
    /// vertical mode. `lo`/`hi` confine the graphical search.
    #[pyo3(signature = (x, y, lo, hi, mode="graphical"))]
    fn distance(&self, x: Vec<f64>, y: f64, lo: Vec<f64>, hi: Vec<f64>, mode: &str) -> PyResult<f64> {
        let b = bounds(lo, hi)?;
        distance::distance(&self.inner, &x, y, self::mode(mode)?, &b).map_err(err)
    }

    /// Per-point distances plus their average, maximum and sum.
    #[pyo3(signature = (xs, ys, lo, hi, mode="graphical"))]
    fn distances<'py>(
        &self,
        py: Python<'py>,
        xs: Vec<Vec<f64>>,
        ys: Vec<f64>,
        lo: Vec<f64>,
        hi: Vec<f64>,
        mode: &str,
    ) -> PyResult<Bound<'py, PyDict>> {
        let (b, m) = (bounds(lo, hi)?, self::mode(mode)?);
        let r = py.detach(|| report(&self.inner, &xs, &ys, m, &b)).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("per_point", r.per_point)?;
        d.set_item("ave", r.ave)?;
        d.set_item("max", r.max)?;
        d.set_item("sum", r.sum)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Surrogate(dim={}, centers={})", self.inner.dim(), self.inner.len())
    }
}

/// Bounded Nelder-Mead on a Python callable. Returns `(best_x, best_f,
/// iterations, terminated_by)`.
#[pyfunction]
#[pyo3(signature = (f, x0, lo, hi, xtol=1e-4, ftol=1e-4, max_iterations=None))]
#[allow(clippy::too_many_arguments)]
fn nelder_mead(
    f: &Bound<'_, PyAny>,
    x0: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    xtol: f64,
    ftol: f64,
    max_iterations: Option<usize>,
) -> PyResult<(Vec<f64>, f64, usize, String)> {
    let b = bounds(lo, hi)?;
    let config = SolverConfig { xtol, ftol, max_iterations, ..SolverConfig::default() };
    config.validate().map_err(err)?;
    // The first Python exception raised by `f` is re-raised unchanged.
    let mut raised: Option<PyErr> = None;
    let objective = |x: &[f64]| -> asymptote::Result<f64> {
        match f.call1((x.to_vec(),)).and_then(|v| v.extract::<f64>()) {
            Ok(v) => Ok(v),
            Err(e) => {
                let text = e.to_string();
                raised.get_or_insert(e);
                Err(asymptote::Error::Model(text))
            }
        }
    };
    let outcome = optimize::nelder_mead(objective, &x0, &b, &config);
    if let Some(e) = raised {
        return Err(e);
    }
    let t = outcome.map_err(|e| err(e.error))?;
    let by = match t.terminated_by {
        optimize::Termination::Tolerance => "tolerance",
        optimize::Termination::MaxIterations => "max-iterations",
    };
    Ok((t.best_x, t.best_f, t.iterations, by.to_string()))
}

fn result_dict<'py>(py: Python<'py>, r: WorkflowResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("termination", r.termination.to_string())?;
    d.set_item("total_evals", r.total_evals)?;
    d.set_item("model_calls", r.model_calls)?;
    let rows = r
        .summaries
        .iter()
        .map(|s| {
            let row = PyDict::new(py);
            row.set_item("iteration", s.iteration)?;
            row.set_item("new_evals", s.new_evals)?;
            row.set_item("total_evals", s.total_evals)?;
            row.set_item("score", s.score)?;
            row.set_item("delta", s.delta)?;
            row.set_item("train_valid", s.train_valid)?;
            row.set_item("test_valid", s.test_valid)?;
            row.set_item("new_extrema", s.new_extrema)?;
            row.set_item("converged", s.converged)?;
            Ok(row)
        })
        .collect::<PyResult<Vec<_>>>()?;
    d.set_item("iterations", rows)?;
    d.set_item("surrogate", r.surrogate.map(|inner| Surrogate { inner }))?;
    Ok(d)
}

/// Runs the experiment described by a TOML document for one seed. With
/// `out`, artifacts go to `<out>/seed-<seed>/` as the command line writes
/// them; otherwise everything stays in memory.
#[pyfunction]
#[pyo3(signature = (config, seed=0, out=None))]
fn run<'py>(py: Python<'py>, config: &str, seed: u64, out: Option<PathBuf>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = ExperimentConfig::from_toml(config).map_err(err)?;
    cfg.validate().map_err(err)?;
    let result = py
        .detach(|| match &out {
            Some(dir) => run_seed(&cfg, seed, &seed_dir(dir, seed), false),
            None => {
                let model = cfg.model()?;
                let mut store = EvalStore::in_memory(model.dim());
                let mut db = SurrogateDb::in_memory();
                let wf = cfg.workflow(seed);
                match cfg.run {
                    RunKind::Asymptotic => run_asymptotic(&*model, &wf, &mut store, &mut db),
                    RunKind::Single => run_single(&*model, &wf, &mut store, &mut db, None),
                }
            }
        })
        .map_err(err)?;
    result_dict(py, result)
}

#[pymodule]
#[pyo3(name = "asymptote")]
fn asymptote_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<Surrogate>()?;
    m.add_function(wrap_pyfunction!(model_ids, m)?)?;
    m.add_function(wrap_pyfunction!(nelder_mead, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
