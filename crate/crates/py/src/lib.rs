//! Python bindings: noise families, divergences, training runs and the
//! verification suites.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use efld_core::bound::CSV_COLUMNS;
use efld_core::divergence::{self, FiniteDist};
use efld_core::rng::stream;
use efld_core::verify::{run_suite, Suite};
use efld_core::{Error, ExpFamily, NoiseDraw, ScaledParam};
use efld_lab::commands;
use efld_lab::config::RunConfig;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Format { .. } => PyIOError::new_err(e.to_string()),
        Error::Numeric { .. } | Error::Quadrature(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn dist(p: Vec<f64>) -> PyResult<FiniteDist> {
    FiniteDist::new(p).map_err(to_py)
}

/// A component-wise exponential family: "gaussian", "bernoulli_pm1" or "bernoulli01".
#[pyclass(name = "ExpFamily", frozen)]
struct PyExpFamily {
    inner: ExpFamily,
}

#[pymethods]
impl PyExpFamily {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        ExpFamily::from_name(name)
            .map(|inner| Self { inner })
            .ok_or_else(|| PyValueError::new_err(format!("unknown family `{name}`")))
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    #[getter]
    fn c2(&self) -> f64 {
        self.inner.c2()
    }

    fn log_partition(&self, theta_alpha: Vec<f64>) -> PyResult<f64> {
        self.inner.log_partition(&theta_alpha).map_err(to_py)
    }

    fn mean_param(&self, theta_alpha: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.mean_param(&theta_alpha).map_err(to_py)
    }

    fn bregman_div(&self, theta1: Vec<f64>, theta2: Vec<f64>) -> PyResult<f64> {
        self.inner.bregman_div(&theta1, &theta2).map_err(to_py)
    }

    /// One draw for natural parameter `theta` and scaling `alpha`.
    #[pyo3(signature = (theta, alpha, seed=0))]
    fn sample_noise(&self, theta: Vec<f64>, alpha: f64, seed: u64) -> PyResult<Vec<f64>> {
        let p = ScaledParam::new(theta, alpha).map_err(to_py)?;
        Ok(self.inner.sample_noise(&p, &mut stream(seed, 0)).0)
    }

    fn log_density(&self, xi: Vec<f64>, theta: Vec<f64>, alpha: f64) -> PyResult<f64> {
        let p = ScaledParam::new(theta, alpha).map_err(to_py)?;
        self.inner.log_density(&NoiseDraw(xi), &p).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("ExpFamily('{}')", self.inner.name())
    }
}

#[pyfunction]
fn hellinger_sq(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    divergence::hellinger_sq(&dist(p)?, &dist(q)?).map_err(to_py)
}

#[pyfunction]
fn kl_div(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    divergence::kl_div(&dist(p)?, &dist(q)?).map_err(to_py)
}

#[pyfunction]
fn tv_dist(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    divergence::tv_dist(&dist(p)?, &dist(q)?).map_err(to_py)
}

/// Exact KL between the mixtures `sQ + (1−s)R` and `sQ′ + (1−s)R`, the
/// quadratic upper bound and the inner integral, as a dict.
#[pyfunction]
fn mixture_kl<'py>(py: Python<'py>, q: Vec<f64>, q_prime: Vec<f64>, r: Vec<f64>, s: f64) -> PyResult<Bound<'py, PyDict>> {
    let m = divergence::mixture_kl_pair(&dist(q)?, &dist(q_prime)?, &dist(r)?, s).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("exact_kl", m.exact_kl)?;
    d.set_item("bound", m.quad_bound)?;
    d.set_item("lsd", m.lsd)?;
    Ok(d)
}

/// Runs a property suite; returns `(passed, report)`.
#[pyfunction]
#[pyo3(signature = (suite, seed=0))]
fn verify(py: Python<'_>, suite: &str, seed: u64) -> PyResult<(bool, String)> {
    let s = Suite::from_name(suite).ok_or_else(|| PyValueError::new_err(format!("unknown suite `{suite}`")))?;
    let report = py.detach(|| run_suite(s, seed)).map_err(to_py)?;
    Ok((report.passed(), report.render()))
}

/// Trains every seed of a TOML config. Returns one dict per seed holding the
/// ledger columns as lists plus final errors.
#[pyfunction]
#[pyo3(signature = (config_toml, seeds, data_dir=None, threads=1))]
fn train<'py>(
    py: Python<'py>,
    config_toml: &str,
    seeds: Vec<u64>,
    data_dir: Option<PathBuf>,
    threads: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = RunConfig::from_toml(config_toml).map_err(to_py)?;
    let out = py.detach(|| commands::train(&cfg, &seeds, data_dir.as_deref(), threads)).map_err(to_py)?;
    let mut result = Vec::new();
    for r in &out.runs {
        let d = PyDict::new(py);
        d.set_item("seed", r.seed)?;
        d.set_item("n", r.bound.n)?;
        d.set_item("our_bound", r.ledger.our_bound(&r.bound))?;
        d.set_item("final_train_err", r.final_train_err)?;
        d.set_item("final_test_err", r.final_test_err)?;
        let table = r.ledger.table(&r.bound);
        for (k, name) in CSV_COLUMNS.iter().enumerate() {
            d.set_item(*name, table.iter().map(|row| row[k]).collect::<Vec<_>>())?;
        }
        result.push(d);
    }
    Ok(result)
}

#[pymodule]
fn efld_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyExpFamily>()?;
    m.add_function(wrap_pyfunction!(hellinger_sq, m)?)?;
    m.add_function(wrap_pyfunction!(kl_div, m)?)?;
    m.add_function(wrap_pyfunction!(tv_dist, m)?)?;
    m.add_function(wrap_pyfunction!(mixture_kl, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add("LEDGER_COLUMNS", CSV_COLUMNS.to_vec())?;
    Ok(())
}
