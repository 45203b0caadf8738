//! Python module `gsvd`: matrix pairs, designed test pairs, the dense
//! reference GSVD and the gGKB solver.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use gsvd_core::ggkb::{GgkbConfig, DEFAULT_BREAKDOWN_TOL, DEFAULT_SEED};
use gsvd_core::mtx::read_matrix_market;
use gsvd_core::solver::{StopReason, DEFAULT_TOL};
use gsvd_core::{testgen, DenseMatrix, GsvdError, PinvMode, Reorth, Side, SolverConfig, SparseMatrix};

fn err(e: GsvdError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn sparse(rows: Vec<Vec<f64>>) -> PyResult<SparseMatrix> {
    Ok(SparseMatrix::from_dense(&DenseMatrix::from_rows(&rows).map_err(err)?))
}

/// A pair `{A, L}` with the same number of columns and `N(A) ∩ N(L) = {0}`.
#[pyclass(frozen)]
struct MatrixPair {
    inner: gsvd_core::MatrixPair,
}

#[pymethods]
impl MatrixPair {
    /// Builds a pair from two lists of rows.
    #[new]
    fn new(a: Vec<Vec<f64>>, l: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = gsvd_core::MatrixPair::new(sparse(a)?, sparse(l)?).map_err(err)?;
        Ok(MatrixPair { inner })
    }

    /// Reads `A` and `L` from Matrix Market files.
    #[staticmethod]
    fn from_mtx(a_path: &str, l_path: &str) -> PyResult<Self> {
        let a = read_matrix_market(a_path).map_err(err)?;
        let l = read_matrix_market(l_path).map_err(err)?;
        let inner = gsvd_core::MatrixPair::new(a, l).map_err(err)?;
        Ok(MatrixPair { inner })
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.inner.a().nrows(), self.inner.l().nrows(), self.inner.n())
    }

    fn a_dense(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.a().to_dense())
    }

    fn l_dense(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.l().to_dense())
    }

    fn __repr__(&self) -> String {
        let (m, p, n) = self.shape();
        format!("MatrixPair(m={m}, p={p}, n={n})")
    }
}

fn rows(d: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..d.nrows()).map(|i| (0..d.ncols()).map(|j| d[(i, j)]).collect()).collect()
}

/// A generated pair and its exact GSVD values.
#[pyclass(frozen)]
struct DesignedPair {
    #[pyo3(get)]
    pair: Py<MatrixPair>,
    #[pyo3(get)]
    c: Vec<f64>,
    #[pyo3(get)]
    s: Vec<f64>,
    #[pyo3(get)]
    recipe: String,
}

fn designed(py: Python<'_>, dp: gsvd_core::testgen::DesignedPair) -> PyResult<DesignedPair> {
    Ok(DesignedPair {
        pair: Py::new(py, MatrixPair { inner: dp.pair })?,
        c: dp.manifest.c,
        s: dp.manifest.s,
        recipe: dp.manifest.recipe,
    })
}

#[pyfunction]
#[pyo3(signature = (n, seed = testgen::DEFAULT_SEED))]
fn make_example1(py: Python<'_>, n: usize, seed: u64) -> PyResult<DesignedPair> {
    designed(py, testgen::make_example1_seeded(n, seed).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (n, r, seed = testgen::DEFAULT_SEED))]
fn make_example3(py: Python<'_>, n: usize, r: usize, seed: u64) -> PyResult<DesignedPair> {
    designed(py, testgen::make_example3_seeded(n, r, seed).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (n, seed = testgen::DEFAULT_SEED))]
fn make_example4(py: Python<'_>, n: usize, seed: u64) -> PyResult<DesignedPair> {
    designed(py, testgen::make_example4_seeded(n, seed).map_err(err)?)
}

/// Pair with prescribed nonincreasing `c` (length `r`) and `D` spread over
/// `d_range`.
#[pyfunction]
#[pyo3(signature = (n, c, d_range = (1.0, 10.0), seed = testgen::DEFAULT_SEED))]
fn make_designed_pair(py: Python<'_>, n: usize, c: Vec<f64>, d_range: (f64, f64), seed: u64) -> PyResult<DesignedPair> {
    designed(py, testgen::make_designed_pair(n, c.len(), &c, d_range, seed).map_err(err)?)
}

/// Dense reference decomposition.
#[pyclass(frozen)]
struct Reference {
    inner: gsvd_core::GsvdReference,
}

#[pymethods]
impl Reference {
    #[getter]
    fn c(&self) -> Vec<f64> {
        self.inner.c.clone()
    }

    #[getter]
    fn s(&self) -> Vec<f64> {
        self.inner.s.clone()
    }

    #[getter]
    fn r(&self) -> usize {
        self.inner.r
    }

    /// `(q1, q2, q3)`: counts with `s = 0`, both positive, and `c = 0`.
    #[getter]
    fn q(&self) -> (usize, usize, usize) {
        (self.inner.q1, self.inner.q2, self.inner.q3)
    }

    /// `x_i`, 0-based.
    fn x(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.inner.r {
            return Err(PyValueError::new_err(format!("component {i} out of range (r = {})", self.inner.r)));
        }
        Ok(self.inner.x(i).to_vec())
    }

    fn save(&self, dir: &str) -> PyResult<()> {
        self.inner.save(dir).map_err(err)
    }
}

#[pyfunction]
fn dense_gsvd(pair: &MatrixPair) -> PyResult<Reference> {
    Ok(Reference {
        inner: gsvd_core::dense_gsvd(&pair.inner).map_err(err)?,
    })
}

#[pyclass(frozen)]
struct GsvdTuple {
    #[pyo3(get)]
    side: String,
    #[pyo3(get)]
    theta: f64,
    #[pyo3(get)]
    c: f64,
    #[pyo3(get)]
    s: f64,
    #[pyo3(get)]
    gamma: f64,
    #[pyo3(get)]
    x: Vec<f64>,
    #[pyo3(get)]
    p_a: Option<Vec<f64>>,
    #[pyo3(get)]
    p_l: Option<Vec<f64>>,
    #[pyo3(get)]
    residual_bound: f64,
    #[pyo3(get)]
    converged: bool,
}

#[pymethods]
impl GsvdTuple {
    fn __repr__(&self) -> String {
        format!(
            "GsvdTuple(side={}, c={}, s={}, bound={:e}, converged={})",
            self.side,
            self.c,
            self.s,
            self.residual_bound,
            if self.converged { "True" } else { "False" }
        )
    }
}

#[pyclass(frozen)]
struct SolverResult {
    #[pyo3(get)]
    tuples: Vec<Py<GsvdTuple>>,
    /// `"converged"`, `"terminated"` or `"max_iters"`.
    #[pyo3(get)]
    stop: String,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    terminate_step: Option<usize>,
    #[pyo3(get)]
    nu: f64,
    #[pyo3(get)]
    history_csv: String,
}

#[pyfunction]
#[pyo3(signature = (
    pair,
    largest = 1,
    smallest = 0,
    side = "A",
    tol = DEFAULT_TOL,
    max_iters = 500,
    reorth = "full",
    pinv = "direct",
    inner_tol = 1e-10,
    seed = DEFAULT_SEED,
    b = None,
))]
#[allow(clippy::too_many_arguments)]
fn run_solver(
    py: Python<'_>,
    pair: &MatrixPair,
    largest: usize,
    smallest: usize,
    side: &str,
    tol: f64,
    max_iters: usize,
    reorth: &str,
    pinv: &str,
    inner_tol: f64,
    seed: u64,
    b: Option<Vec<f64>>,
) -> PyResult<SolverResult> {
    let side: Side = side.parse().map_err(err)?;
    let reorth: Reorth = reorth.parse().map_err(err)?;
    let pinv = match pinv {
        "direct" => PinvMode::Direct { rtol: None },
        "lsqr" => PinvMode::Lsqr {
            tol: inner_tol,
            max_inner_iters: 2000,
        },
        other => return Err(PyValueError::new_err(format!("unknown pinv mode '{other}'"))),
    };
    let cfg = SolverConfig {
        n_largest: largest,
        n_smallest: smallest,
        tol,
        max_iters,
        side,
        ggkb: GgkbConfig {
            max_iters,
            reorth,
            breakdown_tol: DEFAULT_BREAKDOWN_TOL,
            pinv,
            g_weight: None,
            seed,
        },
        ..Default::default()
    };
    let inner = &pair.inner;
    let out = py
        .detach(|| gsvd_core::run_solver(inner, b.as_deref(), &cfg, None))
        .map_err(err)?;
    let tuples = out
        .tuples
        .into_iter()
        .map(|t| {
            Py::new(
                py,
                GsvdTuple {
                    side: t.side.as_str().to_string(),
                    theta: t.theta,
                    c: t.c,
                    s: t.s,
                    gamma: t.gamma,
                    x: t.x,
                    p_a: t.p_a,
                    p_l: t.p_l,
                    residual_bound: t.residual_bound,
                    converged: t.converged,
                },
            )
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok(SolverResult {
        tuples,
        stop: match out.stop {
            StopReason::Converged => "converged",
            StopReason::Terminated { .. } => "terminated",
            StopReason::MaxIters => "max_iters",
        }
        .to_string(),
        iterations: out.state.k(),
        terminate_step: out.state.terminate_step,
        nu: out.nu,
        history_csv: out.history.to_csv(),
    })
}

/// `sin ∠(x, y)` between two nonzero vectors.
#[pyfunction]
fn sin_angle(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    gsvd_core::sin_angle(&x, &y).map_err(err)
}

#[pymodule]
fn gsvd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<MatrixPair>()?;
    m.add_class::<DesignedPair>()?;
    m.add_class::<Reference>()?;
    m.add_class::<GsvdTuple>()?;
    m.add_class::<SolverResult>()?;
    m.add_function(wrap_pyfunction!(make_example1, m)?)?;
    m.add_function(wrap_pyfunction!(make_example3, m)?)?;
    m.add_function(wrap_pyfunction!(make_example4, m)?)?;
    m.add_function(wrap_pyfunction!(make_designed_pair, m)?)?;
    m.add_function(wrap_pyfunction!(dense_gsvd, m)?)?;
    m.add_function(wrap_pyfunction!(run_solver, m)?)?;
    m.add_function(wrap_pyfunction!(sin_angle, m)?)?;
    Ok(())
}
