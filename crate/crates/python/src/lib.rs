//! Python bindings: graphs, mixing systems, constraint sets, objectives and
//! solver runs.

use std::path::PathBuf;

use ddps_core::oracle::{clipped_median as clip, reference_optimum as reference};
use ddps_core::solver::{rate_fit_series, RunReport, NETWORK_ROW};
use ddps_core::weights::{estimate_gamma, limit_error_series};
use ddps_core::{
    ConstraintSet as CoreSet, DirectedGraph as CoreGraph, EpsilonPolicy, Error,
    LocalObjective, ObjectiveSpec as CoreSpec, RunOptions, StepSchedule,
    SurplusSystem as CoreSystem,
};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

fn to_py(err: Error) -> PyErr {
    if err.is_numerical() {
        PyArithmeticError::new_err(err.to_string())
    } else {
        PyValueError::new_err(err.to_string())
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn policy(epsilon: Option<f64>, epsilon_cap: f64) -> EpsilonPolicy {
    match epsilon {
        Some(e) => EpsilonPolicy::Explicit(e),
        None => EpsilonPolicy::CappedAuto { cap: epsilon_cap },
    }
}

#[pyclass(name = "DirectedGraph", module = "ddps")]
struct DirectedGraph {
    inner: CoreGraph,
}

#[pymethods]
impl DirectedGraph {
    #[new]
    fn new(n: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        CoreGraph::new(n, edges)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn cycle(n: usize) -> PyResult<Self> {
        CoreGraph::cycle(n).map(|inner| Self { inner }).map_err(to_py)
    }

    /// Random strongly connected digraph: a shuffled Hamiltonian cycle plus
    /// each other ordered pair with probability `edge_prob`.
    #[staticmethod]
    #[pyo3(signature = (n, edge_prob, seed=0))]
    fn random(n: usize, edge_prob: f64, seed: u64) -> PyResult<Self> {
        CoreGraph::random_strongly_connected(n, edge_prob, seed)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        CoreGraph::load(path).map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        CoreGraph::parse_edge_list(text)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().collect()
    }

    fn in_neighbors(&self, i: usize) -> PyResult<Vec<usize>> {
        self.inner.in_neighbors(i).map(<[usize]>::to_vec).map_err(to_py)
    }

    fn out_neighbors(&self, i: usize) -> PyResult<Vec<usize>> {
        self.inner.out_neighbors(i).map(<[usize]>::to_vec).map_err(to_py)
    }

    fn is_strongly_connected(&self) -> bool {
        self.inner.is_strongly_connected()
    }

    fn to_edge_list(&self) -> String {
        self.inner.to_edge_list()
    }

    fn __eq__(&self, other: PyRef<'_, Self>) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("DirectedGraph(n={}, edges={})", self.inner.n(), self.inner.edge_count())
    }
}

#[pyclass(name = "SurplusSystem", module = "ddps")]
struct SurplusSystem {
    inner: CoreSystem,
}

#[pymethods]
impl SurplusSystem {
    /// `epsilon=None` uses `min(epsilon_cap, 0.99 min_i b_ii)`.
    #[new]
    #[pyo3(signature = (graph, epsilon=None, epsilon_cap=1e-3))]
    fn new(graph: PyRef<'_, DirectedGraph>, epsilon: Option<f64>, epsilon_cap: f64) -> PyResult<Self> {
        CoreSystem::from_graph(&graph.inner, policy(epsilon, epsilon_cap))
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon()
    }

    fn a(&self) -> Vec<Vec<f64>> {
        rows(self.inner.a())
    }

    fn b(&self) -> Vec<Vec<f64>> {
        rows(self.inner.b())
    }

    fn m(&self) -> Vec<Vec<f64>> {
        rows(self.inner.m())
    }

    fn epsilon_upper_bound(&self) -> PyResult<f64> {
        self.inner.epsilon_upper_bound().map_err(to_py)
    }

    /// `‖M^k − L‖_∞` for `k = 0..=k_max`.
    fn limit_error_series(&self, k_max: usize) -> PyResult<Vec<f64>> {
        limit_error_series(self.inner.m(), k_max).map_err(to_py)
    }

    /// Returns `(gamma, Gamma, r_squared)`.
    fn estimate_gamma(&self, k_max: usize) -> PyResult<(f64, f64, f64)> {
        estimate_gamma(self.inner.m(), k_max)
            .map(|f| (f.gamma, f.big_gamma, f.r_squared))
            .map_err(to_py)
    }
}

#[pyclass(name = "ConstraintSet", module = "ddps")]
struct ConstraintSet {
    inner: CoreSet,
}

#[pymethods]
impl ConstraintSet {
    #[staticmethod]
    fn whole_space(dim: usize) -> PyResult<Self> {
        CoreSet::whole_space(dim).map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn ball(center: Vec<f64>, radius: f64) -> PyResult<Self> {
        CoreSet::ball(center, radius).map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(name = "box")]
    fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> PyResult<Self> {
        CoreSet::boxed(lower, upper).map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn interval(lower: f64, upper: f64) -> PyResult<Self> {
        CoreSet::interval(lower, upper).map(|inner| Self { inner }).map_err(to_py)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn project(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.project(&x).map_err(to_py)
    }

    fn contains(&self, x: Vec<f64>) -> PyResult<bool> {
        self.inner.contains(&x).map_err(to_py)
    }
}

#[pyclass(name = "ObjectiveSpec", module = "ddps")]
struct ObjectiveSpec {
    inner: CoreSpec,
}

#[pymethods]
impl ObjectiveSpec {
    #[staticmethod]
    #[pyo3(signature = (n, p, samples_per_agent, label_flip=0.1, seed=0))]
    fn synthetic_logistic(
        n: usize,
        p: usize,
        samples_per_agent: usize,
        label_flip: f64,
        seed: u64,
    ) -> PyResult<Self> {
        CoreSpec::synthetic_logistic(n, p, samples_per_agent, label_flip, seed)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    /// `anchors[i]` lists agent `i`'s points; an empty list is the zero
    /// objective.
    #[staticmethod]
    fn sum_of_distances(p: usize, anchors: Vec<Vec<Vec<f64>>>) -> PyResult<Self> {
        let locals = anchors
            .into_iter()
            .map(|anchors| LocalObjective::SumOfDistances { anchors })
            .collect();
        CoreSpec::new(p, locals).map(|inner| Self { inner }).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    #[getter]
    fn bound(&self) -> f64 {
        self.inner.bound()
    }

    fn value(&self, i: usize, x: Vec<f64>) -> PyResult<f64> {
        self.inner.value(i, &x).map_err(to_py)
    }

    fn global_value(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.global_value(&x).map_err(to_py)
    }

    fn subgradient(&self, i: usize, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.subgradient(i, &x).map_err(to_py)
    }
}

#[pyclass(name = "RunResult", module = "ddps")]
struct RunResult {
    inner: RunReport,
}

#[pymethods]
impl RunResult {
    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        self.inner.final_state.x.clone()
    }

    #[getter]
    fn y(&self) -> Vec<Vec<f64>> {
        self.inner.final_state.y.clone()
    }

    #[getter]
    fn z_bar(&self) -> Vec<f64> {
        self.inner.final_state.z_bar.clone()
    }

    #[getter]
    fn conservation_max_error(&self) -> f64 {
        self.inner.diagnostics.conservation_max_error
    }

    /// Network rows as `(k, consensus_x, y_norm, f_zbar, f_best, gap)`.
    fn network(&self) -> Vec<(usize, f64, f64, f64, f64, f64)> {
        self.inner
            .trace
            .rows
            .iter()
            .filter(|r| r.agent == NETWORK_ROW)
            .map(|r| (r.k, r.consensus_x, r.y_norm, r.f_zbar, r.f_best, r.gap))
            .collect()
    }

    fn trace_csv(&self) -> String {
        self.inner.trace.to_csv_string()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.trace.save(path).map_err(to_py)
    }
}

/// Runs the solver from the zero state.
#[pyfunction]
#[pyo3(signature = (graph, constraint, objective, iters, record_every=1, step_scale=1.0, epsilon=None, epsilon_cap=1e-3, x_star=None, f_star=None))]
#[allow(clippy::too_many_arguments)]
fn run(
    py: Python<'_>,
    graph: PyRef<'_, DirectedGraph>,
    constraint: PyRef<'_, ConstraintSet>,
    objective: PyRef<'_, ObjectiveSpec>,
    iters: usize,
    record_every: usize,
    step_scale: f64,
    epsilon: Option<f64>,
    epsilon_cap: f64,
    x_star: Option<Vec<f64>>,
    f_star: Option<f64>,
) -> PyResult<RunResult> {
    let sched = StepSchedule::new(step_scale).map_err(to_py)?;
    let opts = RunOptions::new(iters, record_every).with_optimum(x_star, f_star);
    let (g, set, spec) = (&graph.inner, &constraint.inner, &objective.inner);
    let pol = policy(epsilon, epsilon_cap);
    py.detach(|| ddps_core::solver::run(g, set, spec, sched, pol, &opts))
        .map(|inner| RunResult { inner })
        .map_err(to_py)
}

/// `(slope, r_squared)` of the log gap against `ln(ln K/√K)`.
#[pyfunction]
fn rate_fit(ks: Vec<usize>, gaps: Vec<f64>) -> PyResult<(f64, f64)> {
    if ks.len() != gaps.len() {
        return Err(PyValueError::new_err("ks and gaps differ in length"));
    }
    let series: Vec<(usize, f64)> = ks.into_iter().zip(gaps).collect();
    rate_fit_series(&series)
        .map(|f| (f.slope, f.r_squared))
        .map_err(to_py)
}

/// Centralized projected subgradient reference: `(x_star, f_star)`.
#[pyfunction]
#[pyo3(signature = (objective, constraint, budget, seed=0))]
fn reference_optimum(
    py: Python<'_>,
    objective: PyRef<'_, ObjectiveSpec>,
    constraint: PyRef<'_, ConstraintSet>,
    budget: usize,
    seed: u64,
) -> PyResult<(Vec<f64>, f64)> {
    let (spec, set) = (&objective.inner, &constraint.inner);
    py.detach(|| reference(spec, set, budget, seed))
        .map(|r| (r.x_star, r.f_star))
        .map_err(to_py)
}

/// Minimizer and value of `Σ|x − a|` over `[lower, upper]`.
#[pyfunction]
fn clipped_median(anchors: Vec<f64>, lower: f64, upper: f64) -> Option<(f64, f64)> {
    clip(&anchors, lower, upper)
}

#[pymodule]
fn ddps(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<DirectedGraph>()?;
    m.add_class::<SurplusSystem>()?;
    m.add_class::<ConstraintSet>()?;
    m.add_class::<ObjectiveSpec>()?;
    m.add_class::<RunResult>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(rate_fit, m)?)?;
    m.add_function(wrap_pyfunction!(reference_optimum, m)?)?;
    m.add_function(wrap_pyfunction!(clipped_median, m)?)?;
    Ok(())
}
