//! Python bindings for the shadow vertex solver.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use shadowlp_core::analysis;
use shadowlp_core::harness::{self, ExperimentConfig};
use shadowlp_core::linalg::DenseMatrix;
use shadowlp_core::oracle::{self, OracleOutcome};
use shadowlp_core::randgen;
use shadowlp_core::{
    run_shadow_path, Basis, LpInstance, PivotOutcome, Polyhedron, RngStream, SolveOutcome, SolveReport, SolverOptions,
};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DenseMatrix> {
    DenseMatrix::from_rows(rows).map_err(value_err)
}

fn rows_of(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// `max cᵀx` subject to `Ax ≤ b`.
#[pyclass(name = "LpInstance", module = "shadowlp", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyLpInstance {
    inner: LpInstance,
}

#[pymethods]
impl PyLpInstance {
    #[new]
    fn new(a: Vec<Vec<f64>>, b: Vec<f64>, c: Vec<f64>) -> PyResult<Self> {
        let poly = Polyhedron::new(matrix(&a)?, b).map_err(value_err)?;
        Ok(Self { inner: LpInstance::new(poly, c).map_err(value_err)? })
    }

    /// Reads the plain-text format: `n d`, n rows of `a_i b_i`, then `c`.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self { inner: LpInstance::parse(text).map_err(value_err)? })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn a(&self) -> Vec<Vec<f64>> {
        rows_of(self.inner.a())
    }

    #[getter]
    fn b(&self) -> Vec<f64> {
        self.inner.b().to_vec()
    }

    #[getter]
    fn c(&self) -> Vec<f64> {
        self.inner.c.clone()
    }

    fn __repr__(&self) -> String {
        format!("LpInstance(n={}, d={})", self.inner.n(), self.inner.d())
    }
}

/// Seeded random stream; `(seed, stream)` pairs are independent.
#[pyclass(name = "Rng", module = "shadowlp")]
struct PyRng {
    inner: RngStream,
}

#[pymethods]
impl PyRng {
    #[new]
    #[pyo3(signature = (seed, stream = 0))]
    fn new(seed: u64, stream: u64) -> Self {
        Self { inner: RngStream::new(seed, stream) }
    }

    fn standard_normal(&mut self, d: usize) -> Vec<f64> {
        self.inner.standard_normal_vec(d)
    }

    fn uniform_sphere(&mut self, d: usize) -> Vec<f64> {
        self.inner.uniform_sphere(d)
    }

    /// Sample from the density proportional to `exp(-‖x‖)`.
    fn exp_ball(&mut self, d: usize) -> Vec<f64> {
        self.inner.exp_ball_sample(d)
    }

    fn random_rotation(&mut self, d: usize) -> Vec<Vec<f64>> {
        rows_of(&self.inner.random_rotation(d))
    }

    /// Adds Gaussian noise of size `sigma` to `abar` (and `bbar` when
    /// `perturb_b`); rows of `(abar, bbar)` must have norm at most 1.
    #[pyo3(signature = (abar, bbar, c, sigma, perturb_b = true))]
    fn smoothed_instance(
        &mut self,
        abar: Vec<Vec<f64>>,
        bbar: Vec<f64>,
        c: Vec<f64>,
        sigma: f64,
        perturb_b: bool,
    ) -> PyResult<PyLpInstance> {
        let s = randgen::smoothed_instance(&mut self.inner, &matrix(&abar)?, &bbar, &c, sigma, perturb_b)
            .map_err(value_err)?;
        Ok(PyLpInstance { inner: s.instance })
    }
}

#[pyclass(name = "SolveResult", module = "shadowlp", frozen, get_all)]
struct PySolveResult {
    /// "optimal", "infeasible" or "unbounded".
    status: String,
    value: Option<f64>,
    x: Option<Vec<f64>>,
    basis: Option<Vec<usize>>,
    ray: Option<Vec<f64>>,
    certificate: Option<Vec<f64>>,
    pivots_phase1: usize,
    pivots_phase2: usize,
    pivots_phase3: usize,
    attempts: usize,
    phase3_path: Vec<Vec<usize>>,
}

#[pymethods]
impl PySolveResult {
    #[getter]
    fn pivots(&self) -> usize {
        self.pivots_phase1 + self.pivots_phase2 + self.pivots_phase3
    }

    fn __repr__(&self) -> String {
        format!("SolveResult(status={:?}, value={:?}, pivots={})", self.status, self.value, self.pivots())
    }
}

impl From<SolveReport> for PySolveResult {
    fn from(r: SolveReport) -> Self {
        let mut out = PySolveResult {
            status: r.outcome.kind().to_string(),
            value: None,
            x: None,
            basis: None,
            ray: None,
            certificate: None,
            pivots_phase1: r.pivots.phase1,
            pivots_phase2: r.pivots.phase2,
            pivots_phase3: r.pivots.phase3,
            attempts: r.attempts,
            phase3_path: r.phase3_path,
        };
        match r.outcome {
            SolveOutcome::Optimal { basis, x, value } => {
                out.value = Some(value);
                out.x = Some(x);
                out.basis = Some(basis);
            }
            SolveOutcome::Unbounded { ray } => out.ray = Some(ray),
            SolveOutcome::Infeasible { certificate } => out.certificate = Some(certificate),
        }
        out
    }
}

/// Three-phase shadow vertex solve.
#[pyfunction]
#[pyo3(signature = (instance, seed = 0, stream = 0, max_restarts = None))]
fn solve(
    py: Python<'_>,
    instance: PyRef<'_, PyLpInstance>,
    seed: u64,
    stream: u64,
    max_restarts: Option<usize>,
) -> PyResult<PySolveResult> {
    let inst = instance.inner.clone();
    let mut opts = SolverOptions::default();
    if let Some(r) = max_restarts {
        opts.max_restarts = r;
    }
    let report = py
        .detach(move || shadowlp_core::solve(&mut RngStream::new(seed, stream), &inst, &opts))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(report.into())
}

/// Brute-force optimum by basis enumeration. Returns
/// `(status, value, point, basis)`, where `point` is the ray when unbounded.
#[pyfunction]
#[pyo3(signature = (instance, objective = None))]
fn oracle_optimum(
    instance: PyRef<'_, PyLpInstance>,
    objective: Option<Vec<f64>>,
) -> PyResult<(String, Option<f64>, Option<Vec<f64>>, Option<Vec<usize>>)> {
    let obj = objective.unwrap_or_else(|| instance.inner.c.clone());
    let out = oracle::lp_optimum_oracle(&instance.inner, &obj).map_err(value_err)?;
    let kind = out.kind().to_string();
    Ok(match out {
        OracleOutcome::Optimal { x, value, basis } => (kind, Some(value), Some(x), Some(basis)),
        OracleOutcome::Unbounded { ray } => (kind, None, Some(ray), None),
        OracleOutcome::Infeasible => (kind, None, None, None),
    })
}

/// Bases visited by the shadow vertex rule from `c` to `c2`, starting at a
/// `c`-optimal basis.
#[pyfunction]
fn shadow_path(
    instance: PyRef<'_, PyLpInstance>,
    c: Vec<f64>,
    c2: Vec<f64>,
    start: Vec<usize>,
) -> PyResult<(Vec<Vec<usize>>, bool)> {
    let poly = &instance.inner.polyhedron;
    let basis = Basis::new(poly, start).map_err(value_err)?;
    let (path, end) = run_shadow_path(poly, &c, &c2, basis, shadowlp_core::shadow::DEFAULT_PIVOT_LIMIT)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((path.index_sequence(), matches!(end, PivotOutcome::Finished(_))))
}

/// Labels of the shadow polygon arc from `c` to `c2`; `None` marks a
/// point at infinity.
#[pyfunction]
fn shadow_arc(instance: PyRef<'_, PyLpInstance>, c: Vec<f64>, c2: Vec<f64>) -> PyResult<Vec<Option<Vec<usize>>>> {
    let shadow = oracle::shadow_polygon_oracle(&instance.inner.polyhedron, &c, &c2).map_err(value_err)?;
    Ok(shadow.arc(&c, &c2))
}

/// `(members, triples, components, holds)` for a membership sequence.
#[pyfunction]
fn count_triples(membership: Vec<bool>) -> (usize, usize, usize, bool) {
    let t = analysis::count_triples(&membership);
    (t.members, t.triples, t.components, t.holds())
}

#[pyfunction]
fn exterior_angles(polygon: Vec<[f64; 2]>) -> PyResult<Vec<f64>> {
    analysis::exterior_angles(&polygon).map_err(value_err)
}

/// `∫ ‖x‖⁻¹` over the polygon boundary inside the annulus `r ≤ ‖x‖ ≤ big_r`.
#[pyfunction]
fn boundary_integral(polygon: Vec<[f64; 2]>, big_r: f64, r: f64) -> PyResult<f64> {
    analysis::boundary_integral(&polygon, big_r, r).map_err(value_err)
}

#[pyfunction]
fn donut_bound(big_r: f64, r: f64) -> f64 {
    analysis::donut_bound(big_r, r)
}

#[pyfunction]
fn segment_cone_trial<'py>(
    py: Python<'py>,
    rng: &mut PyRng,
    b: Vec<Vec<f64>>,
    c: Vec<f64>,
    c2: Vec<f64>,
    m: f64,
    trials: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let t = analysis::segment_cone_trial(&mut rng.inner, &matrix(&b)?, &c, &c2, m, trials).map_err(value_err)?;
    let out = PyDict::new(py);
    out.set_item("p0", t.p0)?;
    out.set_item("pm", t.pm)?;
    out.set_item("diff_mean", t.diff_mean)?;
    out.set_item("std_error", t.std_error())?;
    out.set_item("passes", t.passes())?;
    Ok(out)
}

/// Runs a shadow-size config; returns `(csv, summary_json)`.
#[pyfunction]
#[pyo3(signature = (config, jobs = 1))]
fn run_experiment(py: Python<'_>, config: &str, jobs: usize) -> PyResult<(String, String)> {
    let cfg = ExperimentConfig::parse(config).map_err(value_err)?;
    py.detach(|| {
        let rows = harness::run_shadow_experiment(&cfg, jobs).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok((harness::shadow_csv(&cfg, &rows), harness::to_json(&harness::summarize_shadow(&cfg, &rows))))
    })
}

#[pymodule]
fn shadowlp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLpInstance>()?;
    m.add_class::<PyRng>()?;
    m.add_class::<PySolveResult>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_optimum, m)?)?;
    m.add_function(wrap_pyfunction!(shadow_path, m)?)?;
    m.add_function(wrap_pyfunction!(shadow_arc, m)?)?;
    m.add_function(wrap_pyfunction!(count_triples, m)?)?;
    m.add_function(wrap_pyfunction!(exterior_angles, m)?)?;
    m.add_function(wrap_pyfunction!(boundary_integral, m)?)?;
    m.add_function(wrap_pyfunction!(donut_bound, m)?)?;
    m.add_function(wrap_pyfunction!(segment_cone_trial, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("CSV_SCHEMA_VERSION", harness::CSV_SCHEMA_VERSION)?;
    Ok(())
}
