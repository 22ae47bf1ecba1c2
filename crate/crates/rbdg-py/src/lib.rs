//! Python bindings: the domain types and operations of the robust blind
//! deconvolution library, with matrices exchanged as numpy arrays.

use nalgebra::DMatrix;
use ndarray::Array2;
use numpy::{PyArray2, PyReadonlyArray2, ToPyArray};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use rbdg::diffusion::{diffuse, generate_sources, GenerationConfig, SignalMatrix, SignalRole, ValueDist};
use rbdg::experiments::normalized_error;
use rbdg::graph::{
    commutator, generate_small_world, perturb_rewire, synthesize_filter, Gso, PerturbationSpec,
};
use rbdg::prox::{double_l1_prox, soft_threshold};
use rbdg::solver::{normalize_ground_truth, rbdg_run, rbdh_run, ReweightConfig};
use rbdg::RbdgError;

fn to_py_err(err: RbdgError) -> PyErr {
    match &err {
        RbdgError::InvalidParameter(_)
        | RbdgError::DimensionMismatch(_)
        | RbdgError::Config { .. } => PyValueError::new_err(err.to_string()),
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

fn to_matrix(array: PyReadonlyArray2<'_, f64>) -> DMatrix<f64> {
    let view = array.as_array();
    DMatrix::from_fn(view.nrows(), view.ncols(), |i, j| view[(i, j)])
}

fn to_numpy<'py>(py: Python<'py>, m: &DMatrix<f64>) -> Bound<'py, PyArray2<f64>> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)]).to_pyarray(py)
}

fn as_gso(array: PyReadonlyArray2<'_, f64>) -> PyResult<Gso> {
    Gso::adjacency(to_matrix(array)).map_err(to_py_err)
}

/// A polynomial graph filter with its unit-trace-normalized inverse.
#[pyclass(name = "FilterPair")]
struct PyFilterPair {
    inner: rbdg::graph::FilterPair,
}

#[pymethods]
impl PyFilterPair {
    #[getter]
    fn coeffs(&self) -> Vec<f64> {
        self.inner.coeffs.clone()
    }

    #[getter]
    fn forward<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        to_numpy(py, &self.inner.forward)
    }

    /// The inverse filter, rescaled to unit trace.
    #[getter]
    fn inverse<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        to_numpy(py, &self.inner.inverse)
    }

    #[getter]
    fn trace_scale(&self) -> f64 {
        self.inner.trace_scale
    }

    fn __repr__(&self) -> String {
        format!(
            "FilterPair(order={}, n={}, trace_scale={:.6})",
            self.inner.coeffs.len(),
            self.inner.n(),
            self.inner.trace_scale
        )
    }
}

/// Solver hyperparameters.
#[pyclass(name = "Hyperparams")]
struct PyHyperparams {
    inner: rbdg::solver::Hyperparams,
}

#[pymethods]
impl PyHyperparams {
    #[new]
    #[pyo3(signature = (
        alpha, beta, gamma, lambda_, outer_iters = 20, reweight = false,
        reweight_epsilon = 1e-3, reweight_rounds = 3, reweight_warmup = 2,
        project_hollow_symmetric = true
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        alpha: f64,
        beta: f64,
        gamma: f64,
        lambda_: f64,
        outer_iters: usize,
        reweight: bool,
        reweight_epsilon: f64,
        reweight_rounds: usize,
        reweight_warmup: usize,
        project_hollow_symmetric: bool,
    ) -> PyResult<Self> {
        let mut hp = rbdg::solver::Hyperparams::new(alpha, beta, gamma, lambda_);
        hp.outer_iters = outer_iters;
        hp.project_hollow_symmetric = project_hollow_symmetric;
        if reweight {
            hp.reweight = Some(ReweightConfig {
                epsilon: reweight_epsilon,
                rounds: reweight_rounds,
                warmup: reweight_warmup,
            });
        }
        hp.validate().map_err(to_py_err)?;
        Ok(PyHyperparams { inner: hp })
    }

    fn __repr__(&self) -> String {
        let hp = &self.inner;
        format!(
            "Hyperparams(alpha={}, beta={}, gamma={}, lambda={}, reweight={})",
            hp.alpha,
            hp.beta,
            hp.gamma,
            hp.lambda,
            hp.reweight.is_some()
        )
    }
}

/// Output of the inverse-filter solver.
#[pyclass(name = "RunResult")]
struct PyRunResult {
    g_hat: DMatrix<f64>,
    x_hat: DMatrix<f64>,
    s_hat: DMatrix<f64>,
    #[pyo3(get)]
    objective_trace: Vec<f64>,
    #[pyo3(get)]
    iterations_used: usize,
    #[pyo3(get)]
    converged: bool,
}

#[pymethods]
impl PyRunResult {
    #[getter]
    fn g_hat<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        to_numpy(py, &self.g_hat)
    }

    #[getter]
    fn x_hat<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        to_numpy(py, &self.x_hat)
    }

    #[getter]
    fn s_hat<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        to_numpy(py, &self.s_hat)
    }
}

/// Output of the forward-filter baseline.
#[pyclass(name = "BaselineResult")]
struct PyBaselineResult {
    h_hat: DMatrix<f64>,
    x_hat: DMatrix<f64>,
    s_hat: DMatrix<f64>,
    #[pyo3(get)]
    objective_trace: Vec<f64>,
    #[pyo3(get)]
    iterations_used: usize,
    #[pyo3(get)]
    converged: bool,
}

#[pymethods]
impl PyBaselineResult {
    #[getter]
    fn h_hat<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        to_numpy(py, &self.h_hat)
    }

    #[getter]
    fn x_hat<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        to_numpy(py, &self.x_hat)
    }

    #[getter]
    fn s_hat<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        to_numpy(py, &self.s_hat)
    }
}

/// Samples a connected small-world adjacency matrix.
#[pyfunction]
#[pyo3(name = "generate_small_world")]
fn py_generate_small_world<'py>(
    py: Python<'py>,
    n: usize,
    mean_degree: usize,
    rewire_prob: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyArray2<f64>>> {
    let gso = generate_small_world(n, mean_degree, rewire_prob, seed).map_err(to_py_err)?;
    Ok(to_numpy(py, gso.entries()))
}

/// Deletes round(ratio * E) edges and creates as many absent pairs.
#[pyfunction]
#[pyo3(name = "perturb_rewire")]
fn py_perturb_rewire<'py>(
    py: Python<'py>,
    s: PyReadonlyArray2<'py, f64>,
    ratio: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyArray2<f64>>> {
    let gso = as_gso(s)?;
    let perturbed =
        perturb_rewire(&gso, &PerturbationSpec::rewire(ratio, seed)).map_err(to_py_err)?;
    Ok(to_numpy(py, perturbed.entries()))
}

/// Draws uniform filter coefficients until the polynomial filter is
/// invertible and well-conditioned.
#[pyfunction]
#[pyo3(name = "synthesize_filter", signature = (s, order, seed, cond_limit = 1e4))]
fn py_synthesize_filter(
    s: PyReadonlyArray2<'_, f64>,
    order: usize,
    seed: u64,
    cond_limit: f64,
) -> PyResult<PyFilterPair> {
    let gso = as_gso(s)?;
    let inner = synthesize_filter(&gso, order, seed, cond_limit).map_err(to_py_err)?;
    Ok(PyFilterPair { inner })
}

/// Builds the filter for explicit coefficients (no resampling).
#[pyfunction]
#[pyo3(name = "filter_from_coeffs")]
fn py_filter_from_coeffs(
    s: PyReadonlyArray2<'_, f64>,
    coeffs: Vec<f64>,
) -> PyResult<PyFilterPair> {
    let gso = as_gso(s)?;
    let inner = rbdg::graph::FilterPair::from_coeffs(&gso, &coeffs).map_err(to_py_err)?;
    Ok(PyFilterPair { inner })
}

/// K-sparse source columns; values are unit injections or standard normal
/// draws.
#[pyfunction]
#[pyo3(name = "generate_sources", signature = (n, m, k_sparsity, seed, value_dist = "unit"))]
fn py_generate_sources<'py>(
    py: Python<'py>,
    n: usize,
    m: usize,
    k_sparsity: usize,
    seed: u64,
    value_dist: &str,
) -> PyResult<Bound<'py, PyArray2<f64>>> {
    let dist = match value_dist {
        "unit" => ValueDist::Unit,
        "standard_normal" => ValueDist::StandardNormal,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown value distribution '{other}'"
            )))
        }
    };
    let cfg = GenerationConfig {
        k_sparsity,
        noise_power: 0.0,
        value_dist: dist,
        seed,
    };
    let x = generate_sources(n, m, &cfg).map_err(to_py_err)?;
    Ok(to_numpy(py, x.entries()))
}

/// Diffuses sources through the filter: Y = H X + W.
#[pyfunction]
#[pyo3(name = "diffuse", signature = (filter, x, noise_power = 0.0, seed = 0))]
fn py_diffuse<'py>(
    py: Python<'py>,
    filter: &PyFilterPair,
    x: PyReadonlyArray2<'py, f64>,
    noise_power: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyArray2<f64>>> {
    let xm = SignalMatrix::new(to_matrix(x), SignalRole::Sources);
    let y = diffuse(&filter.inner, &xm, noise_power, seed).map_err(to_py_err)?;
    Ok(to_numpy(py, y.entries()))
}

/// a b - b a.
#[pyfunction]
#[pyo3(name = "commutator")]
fn py_commutator<'py>(
    py: Python<'py>,
    a: PyReadonlyArray2<'py, f64>,
    b: PyReadonlyArray2<'py, f64>,
) -> PyResult<Bound<'py, PyArray2<f64>>> {
    let c = commutator(&to_matrix(a), &to_matrix(b)).map_err(to_py_err)?;
    Ok(to_numpy(py, &c))
}

/// Frobenius-norm relative error.
#[pyfunction]
#[pyo3(name = "normalized_error")]
fn py_normalized_error(
    truth: PyReadonlyArray2<'_, f64>,
    estimate: PyReadonlyArray2<'_, f64>,
) -> PyResult<f64> {
    normalized_error(&to_matrix(truth), &to_matrix(estimate)).map_err(to_py_err)
}

/// Unit-trace reference pair (g_ref, x_ref) with g_ref Y = x_ref noiselessly.
#[pyfunction]
#[pyo3(name = "normalize_ground_truth")]
fn py_normalize_ground_truth<'py>(
    py: Python<'py>,
    filter: &PyFilterPair,
    x: PyReadonlyArray2<'py, f64>,
) -> PyResult<(Bound<'py, PyArray2<f64>>, Bound<'py, PyArray2<f64>>)> {
    let xm = SignalMatrix::new(to_matrix(x), SignalRole::Sources);
    let (g_ref, x_ref) = normalize_ground_truth(&filter.inner, &xm).map_err(to_py_err)?;
    Ok((to_numpy(py, &g_ref), to_numpy(py, x_ref.entries())))
}

/// Entrywise soft threshold.
#[pyfunction]
#[pyo3(name = "soft_threshold")]
fn py_soft_threshold<'py>(
    py: Python<'py>,
    v: PyReadonlyArray2<'py, f64>,
    t: f64,
) -> PyResult<Bound<'py, PyArray2<f64>>> {
    let out = soft_threshold(&to_matrix(v), t, None).map_err(to_py_err)?;
    Ok(to_numpy(py, &out))
}

/// Minimizer of a|s| + b|s - anchor| + (s - v)^2 / 2.
#[pyfunction]
#[pyo3(name = "double_l1_prox")]
fn py_double_l1_prox(v: f64, a: f64, b: f64, anchor: f64) -> PyResult<f64> {
    if a < 0.0 || b < 0.0 {
        return Err(PyValueError::new_err("shrinkage weights must be nonnegative"));
    }
    Ok(double_l1_prox(v, a, b, anchor))
}

/// Inverse-filter alternating solver.
#[pyfunction]
#[pyo3(name = "rbdg_run")]
fn py_rbdg_run(
    y: PyReadonlyArray2<'_, f64>,
    s_bar: PyReadonlyArray2<'_, f64>,
    hp: &PyHyperparams,
) -> PyResult<PyRunResult> {
    let ym = SignalMatrix::new(to_matrix(y), SignalRole::Observations);
    let gso = as_gso(s_bar)?;
    let out = rbdg_run(&ym, &gso, &hp.inner).map_err(to_py_err)?;
    Ok(PyRunResult {
        g_hat: out.g_hat,
        x_hat: out.x_hat.into_entries(),
        s_hat: out.s_hat,
        objective_trace: out.objective_trace,
        iterations_used: out.iterations_used,
        converged: out.converged,
    })
}

/// Forward-filter 3-step baseline.
#[pyfunction]
#[pyo3(name = "rbdh_run")]
fn py_rbdh_run(
    y: PyReadonlyArray2<'_, f64>,
    s_bar: PyReadonlyArray2<'_, f64>,
    hp: &PyHyperparams,
) -> PyResult<PyBaselineResult> {
    let ym = SignalMatrix::new(to_matrix(y), SignalRole::Observations);
    let gso = as_gso(s_bar)?;
    let out = rbdh_run(&ym, &gso, &hp.inner).map_err(to_py_err)?;
    Ok(PyBaselineResult {
        h_hat: out.h_hat,
        x_hat: out.x_hat.into_entries(),
        s_hat: out.s_hat,
        objective_trace: out.objective_trace,
        iterations_used: out.iterations_used,
        converged: out.converged,
    })
}

#[pymodule]
fn rbdg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFilterPair>()?;
    m.add_class::<PyHyperparams>()?;
    m.add_class::<PyRunResult>()?;
    m.add_class::<PyBaselineResult>()?;
    m.add_function(wrap_pyfunction!(py_generate_small_world, m)?)?;
    m.add_function(wrap_pyfunction!(py_perturb_rewire, m)?)?;
    m.add_function(wrap_pyfunction!(py_synthesize_filter, m)?)?;
    m.add_function(wrap_pyfunction!(py_filter_from_coeffs, m)?)?;
    m.add_function(wrap_pyfunction!(py_generate_sources, m)?)?;
    m.add_function(wrap_pyfunction!(py_diffuse, m)?)?;
    m.add_function(wrap_pyfunction!(py_commutator, m)?)?;
    m.add_function(wrap_pyfunction!(py_normalized_error, m)?)?;
    m.add_function(wrap_pyfunction!(py_normalize_ground_truth, m)?)?;
    m.add_function(wrap_pyfunction!(py_soft_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(py_double_l1_prox, m)?)?;
    m.add_function(wrap_pyfunction!(py_rbdg_run, m)?)?;
    m.add_function(wrap_pyfunction!(py_rbdh_run, m)?)?;
    Ok(())
}
