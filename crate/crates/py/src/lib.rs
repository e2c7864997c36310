//! Python bindings: thin wrappers around the graph types, the solver, the
//! doubly stochastic operators, and the synthetic generators. Matrices cross
//! the boundary as nested lists; the `lambda` weight is exposed as
//! `feature_weight` because `lambda` is a Python keyword.

use std::str::FromStr;

use ndarray::Array2;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use softmatch::synth::{self, Connectivity, GenSpec};
use softmatch::{metrics, oracles, scg_solve, AlphaMode, AttributedGraph, SolverConfig, Variant};

fn to_py_err(e: softmatch::Error) -> PyErr {
    match &e {
        softmatch::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix_from_rows(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(PyValueError::new_err("matrix must be nonempty"));
    }
    if rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err("matrix rows have unequal lengths"));
    }
    Array2::from_shape_vec((r, c), rows.concat())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn matrix_to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|row| row.to_vec()).collect()
}

/// An undirected weighted graph with optional node features.
#[pyclass(module = "softmatch_py")]
struct Graph {
    inner: AttributedGraph,
}

#[pymethods]
impl Graph {
    #[new]
    #[pyo3(signature = (affinity, features = None))]
    fn new(affinity: Vec<Vec<f64>>, features: Option<Vec<Vec<f64>>>) -> PyResult<Self> {
        let affinity = matrix_from_rows(affinity)?;
        let features = features.map(matrix_from_rows).transpose()?;
        Ok(Graph {
            inner: AttributedGraph::new(affinity, features).map_err(to_py_err)?,
        })
    }

    /// Builds a complete graph from 2D points, weighted by distance.
    #[staticmethod]
    #[pyo3(signature = (points, features = None))]
    fn from_points(points: Vec<(f64, f64)>, features: Option<Vec<Vec<f64>>>) -> PyResult<Self> {
        let points: Vec<[f64; 2]> = points.into_iter().map(|(x, y)| [x, y]).collect();
        let features = features.map(matrix_from_rows).transpose()?;
        Ok(Graph {
            inner: softmatch::graph_from_points(&points, features).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Graph {
            inner: softmatch::load_graph(path).map_err(to_py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        softmatch::save_graph(path, &self.inner).map_err(to_py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn affinity(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(self.inner.affinity())
    }

    fn features(&self) -> Option<Vec<Vec<f64>>> {
        self.inner.features().map(matrix_to_rows)
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(n={}, features={})",
            self.inner.n(),
            self.inner.features().is_some()
        )
    }
}

/// Result of a solve: the hard assignment plus convergence diagnostics.
#[pyclass(module = "softmatch_py")]
struct SolveReport {
    #[pyo3(get)]
    algo: String,
    #[pyo3(get)]
    pairs: Vec<(usize, usize)>,
    #[pyo3(get)]
    objective: f64,
    #[pyo3(get)]
    matching_error: f64,
    #[pyo3(get)]
    accuracy: Option<f64>,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    termination: String,
    #[pyo3(get)]
    alpha_trace: Vec<f64>,
    #[pyo3(get)]
    wall_time_seconds: f64,
}

#[pymethods]
impl SolveReport {
    fn __repr__(&self) -> String {
        format!(
            "SolveReport(algo='{}', objective={}, iterations={}, termination='{}')",
            self.algo, self.objective, self.iterations, self.termination
        )
    }
}

fn termination_name(t: softmatch::Termination) -> &'static str {
    match t {
        softmatch::Termination::Tolerance => "tolerance",
        softmatch::Termination::Stagnation => "stagnation",
        softmatch::Termination::IterationCap => "iteration-cap",
    }
}

/// Matches two graphs. `algo` is one of scg, ga, dspfp, aipfp, sm; `alpha`
/// is "adaptive" or a fixed value in [0, 1]; `truth` adds an accuracy field.
#[pyfunction]
#[pyo3(signature = (a, b, algo = "scg", gamma = None, feature_weight = None, alpha = None,
                    eps_outer = None, eps_sinkhorn = None, max_iters = None, truth = None))]
#[allow(clippy::too_many_arguments)]
fn solve(
    a: &Graph,
    b: &Graph,
    algo: &str,
    gamma: Option<f64>,
    feature_weight: Option<f64>,
    alpha: Option<&str>,
    eps_outer: Option<f64>,
    eps_sinkhorn: Option<f64>,
    max_iters: Option<usize>,
    truth: Option<Vec<(usize, usize)>>,
) -> PyResult<SolveReport> {
    let variant = Variant::from_str(algo).map_err(to_py_err)?;
    let mut base = SolverConfig::defaults_for(&a.inner, &b.inner);
    if let Some(v) = gamma {
        base.gamma = v;
    }
    if let Some(v) = feature_weight {
        base.lambda = v;
    }
    if let Some(v) = eps_outer {
        base.eps_outer = v;
    }
    if let Some(v) = eps_sinkhorn {
        base.eps_sinkhorn = v;
    }
    if let Some(v) = max_iters {
        base.max_outer = v;
    }
    let mut config = variant.config_from(&base);
    if let Some(raw) = alpha {
        config.alpha = AlphaMode::from_str(raw).map_err(to_py_err)?;
    }
    config.validate().map_err(to_py_err)?;

    let truth = truth
        .map(|pairs| softmatch::PermutationMatching::new(pairs, a.inner.n(), b.inner.n()))
        .transpose()
        .map_err(to_py_err)?;

    let result = scg_solve(&a.inner, &b.inner, &config).map_err(to_py_err)?;
    let matching_error =
        metrics::matching_error(&result.matching, &a.inner, &b.inner, config.lambda)
            .map_err(to_py_err)?;
    let accuracy = truth
        .as_ref()
        .map(|t| metrics::accuracy(&result.matching, t))
        .transpose()
        .map_err(to_py_err)?;

    Ok(SolveReport {
        algo: variant.name().to_string(),
        pairs: result.matching.pairs().to_vec(),
        objective: result.objective,
        matching_error,
        accuracy,
        iterations: result.iterations,
        termination: termination_name(result.termination).to_string(),
        alpha_trace: result.alpha_trace,
        wall_time_seconds: result.solve_seconds,
    })
}

/// Projects a matrix toward the doubly stochastic polytope. Returns
/// `(matrix, sweeps, converged)`.
#[pyfunction]
#[pyo3(signature = (x, gamma = 5.0, eps = 1e-9, max_iters = 1000))]
fn dynamic_softassign(
    x: Vec<Vec<f64>>,
    gamma: f64,
    eps: f64,
    max_iters: usize,
) -> PyResult<(Vec<Vec<f64>>, usize, bool)> {
    let x = matrix_from_rows(x)?;
    let out = softmatch::dynamic_softassign(&x, gamma, eps, max_iters).map_err(to_py_err)?;
    Ok((
        matrix_to_rows(&out.matrix),
        out.inner_iterations,
        out.converged,
    ))
}

/// Exact maximum-profit assignment.
#[pyfunction]
fn hungarian(x: Vec<Vec<f64>>) -> PyResult<Vec<(usize, usize)>> {
    let x = matrix_from_rows(x)?;
    Ok(softmatch::hungarian(&x).map_err(to_py_err)?.pairs().to_vec())
}

/// A random graph on uniform points in the unit square; `connectivity` is
/// "full" or "delaunay".
#[pyfunction]
#[pyo3(signature = (n, seed, connectivity = "full"))]
fn random_geometric_graph(n: usize, seed: u64, connectivity: &str) -> PyResult<Graph> {
    let connectivity = Connectivity::from_str(connectivity).map_err(to_py_err)?;
    Ok(Graph {
        inner: synth::random_geometric_graph(n, seed, connectivity).map_err(to_py_err)?,
    })
}

/// A graph, a relabeled noisy twin, and the ground-truth pairs.
#[pyfunction]
#[pyo3(signature = (n, seed, phi = 1.0, deletion_pct = 0.0, connectivity = "delaunay"))]
fn generate_pair(
    n: usize,
    seed: u64,
    phi: f64,
    deletion_pct: f64,
    connectivity: &str,
) -> PyResult<(Graph, Graph, Vec<(usize, usize)>)> {
    let spec = GenSpec {
        n,
        seed,
        phi,
        deletion_pct,
        connectivity: Connectivity::from_str(connectivity).map_err(to_py_err)?,
    };
    let pair = spec.generate_pair().map_err(to_py_err)?;
    Ok((
        Graph { inner: pair.a },
        Graph { inner: pair.b },
        pair.truth.pairs().to_vec(),
    ))
}

/// Fraction of agreeing pairs between a found matching and the truth.
#[pyfunction]
fn accuracy(
    found: Vec<(usize, usize)>,
    truth: Vec<(usize, usize)>,
    n: usize,
    m: usize,
) -> PyResult<f64> {
    let found = softmatch::PermutationMatching::new(found, n, m).map_err(to_py_err)?;
    let truth = softmatch::PermutationMatching::new(truth, n, m).map_err(to_py_err)?;
    metrics::accuracy(&found, &truth).map_err(to_py_err)
}

/// Runs the oracle checks; returns `(name, passed, detail)` triples.
#[pyfunction]
#[pyo3(signature = (filter = None))]
fn selftest(filter: Option<&str>) -> Vec<(String, bool, String)> {
    oracles::run_selftest(filter)
        .into_iter()
        .map(|r| (r.name.to_string(), r.passed, r.detail))
        .collect()
}

#[pymodule]
fn softmatch_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Graph>()?;
    m.add_class::<SolveReport>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(dynamic_softassign, m)?)?;
    m.add_function(wrap_pyfunction!(hungarian, m)?)?;
    m.add_function(wrap_pyfunction!(random_geometric_graph, m)?)?;
    m.add_function(wrap_pyfunction!(generate_pair, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
