//! Python bindings: generative models, adjacency matrices, spectra, the
//! pair/group membership tests, correlation-network ingestion, and the
//! Monte Carlo driver.
//!
//! Node indices are 0-based on this surface, matching Python convention;
//! the command-line tool is 1-based.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList};

use netcohort::error::Error;
use netcohort::harness;
use netcohort::inference;
use netcohort::ingest;
use netcohort::model;
use netcohort::spectral;

fn to_py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Numerical(_) => PyRuntimeError::new_err(msg),
        Error::Io(_) | Error::Csv(_) => PyIOError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn parse_variant(name: &str) -> PyResult<inference::Variant> {
    match name {
        "T" => Ok(inference::Variant::T),
        "ratio" => Ok(inference::Variant::Ratio),
        other => Err(PyValueError::new_err(format!(
            "unknown variant '{other}' (expected 'T' or 'ratio')"
        ))),
    }
}

fn parse_format(name: &str) -> PyResult<ingest::AdjFormat> {
    ingest::AdjFormat::parse(name).map_err(to_py_err)
}

fn json_to_py(py: Python<'_>, value: &serde_json::Value) -> PyResult<Py<PyAny>> {
    use serde_json::Value as V;
    Ok(match value {
        V::Null => py.None(),
        V::Bool(b) => PyBool::new(py, *b).to_owned().into_any().unbind(),
        V::Number(number) => {
            if let Some(v) = number.as_i64() {
                v.into_pyobject(py)?.into_any().unbind()
            } else if let Some(v) = number.as_u64() {
                v.into_pyobject(py)?.into_any().unbind()
            } else {
                number
                    .as_f64()
                    .unwrap_or(f64::NAN)
                    .into_pyobject(py)?
                    .into_any()
                    .unbind()
            }
        }
        V::String(s) => s.as_str().into_pyobject(py)?.into_any().unbind(),
        V::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any().unbind()
        }
        V::Object(map) => {
            let dict = PyDict::new(py);
            for (key, item) in map {
                dict.set_item(key, json_to_py(py, item)?)?;
            }
            dict.into_any().unbind()
        }
    })
}

fn serialize_to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let json = serde_json::to_value(value)
        .map_err(|e| PyRuntimeError::new_err(format!("serialization failed: {e}")))?;
    json_to_py(py, &json)
}

/// A generative network model: membership profiles, degree weights, and a
/// community kernel.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Model {
    inner: model::NetworkModel,
}

#[pymethods]
impl Model {
    /// Benchmark preset 1..4 with five communities. `level` is theta for
    /// presets 1/3 and r^2 for presets 2/4; `delta` applies to 3/4 only.
    #[staticmethod]
    #[pyo3(signature = (example, n, level, delta=None, seed=0))]
    fn example(example: u8, n: usize, level: f64, delta: Option<f64>, seed: u64) -> PyResult<Self> {
        let inner = model::example_model(example, n, level, delta, seed).map_err(to_py_err)?;
        Ok(Model { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.membership.n()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.membership.k()
    }

    fn theta_bar(&self) -> f64 {
        self.inner.theta_bar()
    }

    /// Signal scale sqrt(n * theta_bar).
    fn q(&self) -> f64 {
        self.inner.q()
    }

    fn membership_row(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.inner.membership.n() {
            return Err(PyValueError::new_err(format!("node {i} out of range")));
        }
        Ok(self.inner.membership.row(i).to_vec())
    }

    /// Draw one adjacency matrix: independent edges with the model's link
    /// probabilities.
    fn sample(&self, seed: u64) -> PyResult<Adjacency> {
        let x = model::sample_adjacency(&self.inner, seed).map_err(to_py_err)?;
        Ok(Adjacency { inner: x })
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(n={}, k={}, theta_bar={:.4})",
            self.inner.membership.n(),
            self.inner.membership.k(),
            self.inner.theta_bar()
        )
    }
}

/// Symmetric binary adjacency matrix.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Adjacency {
    inner: spectral::AdjacencyMatrix,
}

#[pymethods]
impl Adjacency {
    /// Build from dense 0/1 rows; validates symmetry and the self-loop flag.
    #[staticmethod]
    #[pyo3(signature = (rows, self_loops=false))]
    fn from_rows(rows: Vec<Vec<f64>>, self_loops: bool) -> PyResult<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in &rows {
            if row.len() != n {
                return Err(PyValueError::new_err(format!(
                    "expected {n} entries per row, got {}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        let inner = spectral::AdjacencyMatrix::from_dense(n, data, self_loops).map_err(to_py_err)?;
        Ok(Adjacency { inner })
    }

    /// Read from a file in edge-list, dense-csv, or coordinate format.
    #[staticmethod]
    #[pyo3(signature = (path, format="dense-csv"))]
    fn load(path: PathBuf, format: &str) -> PyResult<Self> {
        let format = parse_format(format)?;
        let inner = ingest::load_adjacency(&path, format).map_err(to_py_err)?;
        Ok(Adjacency { inner })
    }

    #[pyo3(signature = (path, format="dense-csv"))]
    fn save(&self, path: PathBuf, format: &str) -> PyResult<()> {
        let format = parse_format(format)?;
        ingest::save_adjacency(&path, format, &self.inner).map_err(to_py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn self_loops(&self) -> bool {
        self.inner.self_loops()
    }

    fn degree(&self, j: usize) -> PyResult<f64> {
        if j >= self.inner.n() {
            return Err(PyValueError::new_err(format!("node {j} out of range")));
        }
        Ok(self.inner.degree(j))
    }

    fn to_rows(&self) -> Vec<Vec<f64>> {
        let n = self.inner.n();
        (0..n)
            .map(|i| (0..n).map(|j| self.inner.mat().get(i, j)).collect())
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("Adjacency(n={}, self_loops={})", self.inner.n(), self.inner.self_loops())
    }
}

/// Leading eigenpairs by magnitude: a dict with "values" and "vectors"
/// (one list of n entries per eigenpair).
#[pyfunction]
#[pyo3(signature = (adj, k))]
fn spectrum(py: Python<'_>, adj: &Adjacency, k: usize) -> PyResult<Py<PyAny>> {
    let spec = spectral::leading_spectrum(&adj.inner, k).map_err(to_py_err)?;
    let dict = PyDict::new(py);
    dict.set_item("values", spec.values.clone())?;
    dict.set_item("vectors", spec.vectors.clone())?;
    Ok(dict.into_any().unbind())
}

/// Data-driven working rank under the pair or group threshold rule.
#[pyfunction]
#[pyo3(signature = (adj, scope="pair", k=12, multiplier=None))]
fn estimate_k0(adj: &Adjacency, scope: &str, k: usize, multiplier: Option<f64>) -> PyResult<usize> {
    let rule = match scope {
        "pair" => spectral::K0Variant::Pair,
        "group" => spectral::K0Variant::Group,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown scope '{other}' (expected 'pair' or 'group')"
            )))
        }
    };
    let n = adj.inner.n();
    let spec = spectral::leading_spectrum(&adj.inner, k.min(n)).map_err(to_py_err)?;
    let (_, q_check) = spectral::max_degree_q(&adj.inner);
    match spectral::estimate_k0(&spec, q_check, n, rule, multiplier) {
        Err(Error::Numerical(msg)) if msg.contains("undetermined") => {
            let full = spectral::leading_spectrum(&adj.inner, n).map_err(to_py_err)?;
            spectral::estimate_k0(&full, q_check, n, rule, multiplier).map_err(to_py_err)
        }
        other => other.map_err(to_py_err),
    }
}

/// Test whether nodes i and j (0-based) share a membership profile.
/// Returns the full report as a dict.
#[pyfunction]
#[pyo3(signature = (adj, i, j, alpha=0.05, variant="T", k0=None, k0_multiplier=None))]
#[allow(clippy::too_many_arguments)]
fn test_pair(
    py: Python<'_>,
    adj: &Adjacency,
    i: usize,
    j: usize,
    alpha: f64,
    variant: &str,
    k0: Option<usize>,
    k0_multiplier: Option<f64>,
) -> PyResult<Py<PyAny>> {
    let opts = inference::TestOptions {
        alpha,
        variant: parse_variant(variant)?,
        k0_override: k0,
        k0_multiplier,
        subsample_m0: None,
    };
    let report = inference::run_pair_test(&adj.inner, i, j, &opts).map_err(to_py_err)?;
    serialize_to_py(py, &report)
}

/// Test whether a group of nodes (0-based) shares a membership profile.
/// The seed drives the random coupling. Returns the full report as a dict.
#[pyfunction]
#[pyo3(signature = (adj, nodes, seed, alpha=0.05, variant="T", k0=None, k0_multiplier=None, subsample=None))]
#[allow(clippy::too_many_arguments)]
fn test_group(
    py: Python<'_>,
    adj: &Adjacency,
    nodes: Vec<usize>,
    seed: u64,
    alpha: f64,
    variant: &str,
    k0: Option<usize>,
    k0_multiplier: Option<f64>,
    subsample: Option<usize>,
) -> PyResult<Py<PyAny>> {
    let opts = inference::TestOptions {
        alpha,
        variant: parse_variant(variant)?,
        k0_override: k0,
        k0_multiplier,
        subsample_m0: subsample,
    };
    let report = inference::run_group_test(&adj.inner, &nodes, seed, &opts).map_err(to_py_err)?;
    serialize_to_py(py, &report)
}

/// Threshold absolute correlations of a series panel into a binary graph.
/// `series` holds one list of observations per series; `covariates`
/// (optional) one list per factor, used when `residualize` is set.
#[pyfunction]
#[pyo3(signature = (names, series, threshold, covariates=None, residualize=false))]
fn correlation_network(
    names: Vec<String>,
    series: Vec<Vec<f64>>,
    threshold: f64,
    covariates: Option<Vec<Vec<f64>>>,
    residualize: bool,
) -> PyResult<Adjacency> {
    if names.len() != series.len() {
        return Err(PyValueError::new_err(format!(
            "{} names for {} series",
            names.len(),
            series.len()
        )));
    }
    let panel = ingest::SeriesPanel { names, series, covariates };
    let inner = ingest::correlation_network(&panel, threshold, residualize).map_err(to_py_err)?;
    Ok(Adjacency { inner })
}

/// Seeded Monte Carlo sweep on a benchmark preset; `k0=None` switches to
/// the data-driven rank rule. Returns the summary as a dict (rates, CI,
/// statistic sample, ECDF grid, rank tallies).
#[pyfunction]
#[pyo3(signature = (example, n=600, m=10, k0=3, level=0.5, delta=None, alpha=0.05, reps=200, seed=0, workers=None))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    example: u8,
    n: usize,
    m: usize,
    k0: Option<usize>,
    level: f64,
    delta: Option<f64>,
    alpha: f64,
    reps: usize,
    seed: u64,
    workers: Option<usize>,
) -> PyResult<Py<PyAny>> {
    let config = harness::build_sim_config(
        example,
        &harness::SimOverrides {
            n: Some(n),
            level: Some(level),
            delta,
            m: Some(m),
            k0: Some(match k0 {
                Some(v) => harness::K0Policy::Fixed(v),
                None => harness::K0Policy::DataDriven,
            }),
            k0_multiplier: None,
            alpha: Some(alpha),
            reps: Some(reps),
            seed: Some(seed),
        },
    )
    .map_err(to_py_err)?;
    let summary = py
        .detach(|| harness::run_with_workers(workers, || harness::monte_carlo(&config)))
        .map_err(to_py_err)?
        .map_err(to_py_err)?;
    serialize_to_py(py, &summary)
}

/// Centering constant of the Gumbel calibration for an even group size.
#[pyfunction]
fn gumbel_centering(m: usize, k_eff: usize) -> PyResult<f64> {
    inference::gumbel_centering(m, k_eff).map_err(to_py_err)
}

/// The sampled coupling: disjoint pairs, plus the dropped node for odd
/// groups.
#[pyfunction]
fn random_coupling(py: Python<'_>, nodes: Vec<usize>, seed: u64) -> PyResult<Py<PyAny>> {
    let plan = inference::random_coupling(&nodes, seed).map_err(to_py_err)?;
    serialize_to_py(py, &plan)
}

#[pymodule]
fn _netcohort(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", netcohort::VERSION)?;
    m.add_class::<Model>()?;
    m.add_class::<Adjacency>()?;
    m.add_function(wrap_pyfunction!(spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_k0, m)?)?;
    m.add_function(wrap_pyfunction!(test_pair, m)?)?;
    m.add_function(wrap_pyfunction!(test_group, m)?)?;
    m.add_function(wrap_pyfunction!(correlation_network, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(gumbel_centering, m)?)?;
    m.add_function(wrap_pyfunction!(random_coupling, m)?)?;
    Ok(())
}
