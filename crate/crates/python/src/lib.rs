//! Python bindings: scenarios, convex sets, linear operators and the Brouwer degree of
//! Python callables. Reports cross the boundary as JSON strings.

use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use cdegree::degree::{self, DegreeOptions, MeshParams, Shape};
use cdegree::harness::{self, Scenario};
use cdegree::integrator;
use cdegree::scenario::{self, ScenarioSpec};
use cdegree::{ConvexSet, Error, LinearOperator, SelectionRule};

create_exception!(cdegree, DegreeError, PyException);
create_exception!(cdegree, InconclusiveError, DegreeError);

fn to_py(e: Error) -> PyErr {
    match e.root() {
        Error::InvalidInput(_)
        | Error::DimensionMismatch { .. }
        | Error::Domain(_)
        | Error::Config(_)
        | Error::Precondition(_) => PyValueError::new_err(e.to_string()),
        Error::Inconclusive { .. } => InconclusiveError::new_err(e.to_string()),
        _ => DegreeError::new_err(e.to_string()),
    }
}

fn vector(xs: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(xs)
}

fn list(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("report serializes")
}

#[pyclass(name = "Scenario", module = "cdegree")]
struct PyScenario {
    spec: ScenarioSpec,
    inner: Scenario,
}

impl PyScenario {
    fn from_spec(spec: ScenarioSpec) -> PyResult<Self> {
        let inner = spec.build().map_err(to_py)?;
        Ok(Self { spec, inner })
    }
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    #[pyo3(signature = (text, overrides = None))]
    fn from_json(text: &str, overrides: Option<Vec<String>>) -> PyResult<Self> {
        let spec = ScenarioSpec::from_json_with_overrides(text, &overrides.unwrap_or_default()).map_err(to_py)?;
        Self::from_spec(spec)
    }

    #[staticmethod]
    fn bundled(name: &str) -> PyResult<Self> {
        Self::from_spec(scenario::bundled(name).map_err(to_py)?)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.op.dim()
    }

    fn to_json(&self) -> String {
        self.spec.to_json()
    }

    /// The verification report as JSON.
    fn verify(&self) -> PyResult<String> {
        harness::verify(&self.inner).map(|r| r.to_json()).map_err(to_py)
    }

    /// `deg_K(A + F(0, ·), U)` over the scenario sweep.
    #[pyo3(signature = (seed = None))]
    fn degree(&self, seed: Option<u64>) -> PyResult<i64> {
        let opts = DegreeOptions {
            rule: seed.map_or(SelectionRule::Barycenter, SelectionRule::Seeded),
            ..DegreeOptions::default()
        };
        let region = self.inner.region().map_err(to_py)?;
        degree::degree_rhs(&self.inner.op, &self.inner.map, region, &self.inner.sweeps.pairs(), &opts)
            .map(|c| c.value)
            .map_err(to_py)
    }

    /// `(times, states)` along the barycentric tangent selection.
    fn simulate(&self, x0: Vec<f64>, t_end: f64, h: f64) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let s = &self.inner;
        let f = s.selection(SelectionRule::Barycenter).map_err(to_py)?;
        let traj = integrator::solve(&s.op, &s.set, &f, &vector(x0), t_end, h, s.scheme).map_err(to_py)?;
        Ok((traj.times.clone(), traj.states.iter().map(list).collect()))
    }

    /// `P_t(x0)`.
    #[pyo3(signature = (x0, t, h = None))]
    fn poincare(&self, x0: Vec<f64>, t: f64, h: Option<f64>) -> PyResult<Vec<f64>> {
        let s = &self.inner;
        let f = s.selection(SelectionRule::Barycenter).map_err(to_py)?;
        let h = h.unwrap_or(s.sweeps.poincare_h);
        integrator::poincare(&s.op, &s.set, &f, &vector(x0), t, h, s.scheme)
            .map(|u| list(&u))
            .map_err(to_py)
    }

    /// Boundary exclusion scan as JSON.
    #[pyo3(signature = (z, t, horizon = None, threshold = 1e-6))]
    fn scan(&self, z: Vec<f64>, t: Vec<f64>, horizon: Option<f64>, threshold: f64) -> PyResult<String> {
        harness::boundary_exclusion_scan(&self.inner, horizon, &z, &t, threshold)
            .map(|r| json(&r))
            .map_err(to_py)
    }

    /// Boundary residuals of the homotopies joining `P_t` to the one-step map, as JSON.
    fn bridge(&self, t: f64, h: f64, z: Vec<f64>) -> PyResult<String> {
        harness::homotopy_bridge_check(&self.inner, t, h, &z)
            .map(|r| json(&r))
            .map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Scenario({:?}, dim={})", self.inner.name, self.inner.op.dim())
    }
}

#[pyclass(name = "ConvexSet", module = "cdegree")]
struct PyConvexSet(ConvexSet);

#[pymethods]
impl PyConvexSet {
    /// Box with `None` for an infinite bound.
    #[staticmethod]
    #[pyo3(name = "box")]
    fn boxed(lo: Vec<Option<f64>>, hi: Vec<Option<f64>>) -> PyResult<Self> {
        let lo = DVector::from_iterator(lo.len(), lo.into_iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)));
        let hi = DVector::from_iterator(hi.len(), hi.into_iter().map(|v| v.unwrap_or(f64::INFINITY)));
        ConvexSet::boxed(lo, hi).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn ball(center: Vec<f64>, radius: f64) -> PyResult<Self> {
        ConvexSet::ball(vector(center), radius).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn halfspaces(normals: Vec<Vec<f64>>, offsets: Vec<f64>) -> PyResult<Self> {
        ConvexSet::halfspaces(normals.into_iter().map(vector).collect(), offsets)
            .map(Self)
            .map_err(to_py)
    }

    #[staticmethod]
    fn orthant(dim: usize) -> PyResult<Self> {
        ConvexSet::orthant(dim).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn whole(dim: usize) -> PyResult<Self> {
        ConvexSet::whole(dim).map(Self).map_err(to_py)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn project(&self, y: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.project(&vector(y)).map(|p| list(&p)).map_err(to_py)
    }

    #[pyo3(signature = (x, tol = 1e-9))]
    fn contains(&self, x: Vec<f64>, tol: f64) -> PyResult<bool> {
        self.0.contains(&vector(x), tol).map_err(to_py)
    }

    fn distance(&self, y: Vec<f64>) -> PyResult<f64> {
        self.0.distance(&vector(y)).map_err(to_py)
    }

    /// Whether `v` lies in the tangent cone at `x`.
    #[pyo3(signature = (x, v, tol = 1e-9))]
    fn tangent(&self, x: Vec<f64>, v: Vec<f64>, tol: f64) -> PyResult<bool> {
        let cone = self.0.tangent_cone_default(&vector(x)).map_err(to_py)?;
        Ok(cone.contains(&vector(v), tol))
    }
}

#[pyclass(name = "LinearOperator", module = "cdegree")]
struct PyLinearOperator(LinearOperator);

#[pymethods]
impl PyLinearOperator {
    /// Dense generator from a list of rows.
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(PyValueError::new_err("rows must have equal length"));
        }
        LinearOperator::new(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
            .map(Self)
            .map_err(to_py)
    }

    #[staticmethod]
    fn diag(values: Vec<f64>) -> PyResult<Self> {
        LinearOperator::diag(&values).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn dirichlet_laplacian_1d(n: usize) -> PyResult<Self> {
        LinearOperator::dirichlet_laplacian_1d(n).map(Self).map_err(to_py)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn semigroup_apply(&self, t: f64, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.semigroup_apply(t, &vector(x)).map(|u| list(&u)).map_err(to_py)
    }

    fn resolvent_apply(&self, h: f64, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.resolvent_apply(h, &vector(x)).map(|u| list(&u)).map_err(to_py)
    }
}

/// Brouwer degree of a callable `f(x: list) -> list` on a ball (`center`, `radius`) or a
/// box (`lo`, `hi`), in dimension 1 to 3.
#[pyfunction]
#[pyo3(signature = (f, center = None, radius = None, lo = None, hi = None, tol = 1e-9))]
fn brouwer_degree(
    f: &Bound<'_, PyAny>,
    center: Option<Vec<f64>>,
    radius: Option<f64>,
    lo: Option<Vec<f64>>,
    hi: Option<Vec<f64>>,
    tol: f64,
) -> PyResult<i64> {
    let shape = match (center, radius, lo, hi) {
        (Some(c), Some(r), None, None) => Shape::ball(vector(c), r),
        (None, None, Some(lo), Some(hi)) => Shape::boxed(vector(lo), vector(hi)),
        _ => return Err(PyValueError::new_err("give either center and radius, or lo and hi")),
    }
    .map_err(to_py)?;
    let map = |x: &DVector<f64>| -> cdegree::Result<DVector<f64>> {
        let y = f
            .call1((list(x),))
            .and_then(|r| r.extract::<Vec<f64>>())
            .map_err(|e| Error::InvalidInput(format!("callable failed: {e}")))?;
        Ok(vector(y))
    };
    degree::brouwer_degree(&map, &shape, &MeshParams::default(), tol)
        .map(|c| c.value)
        .map_err(to_py)
}

#[pyfunction]
fn list_scenarios() -> Vec<&'static str> {
    scenario::list_scenarios()
}

#[pymodule]
#[pyo3(name = "cdegree")]
fn cdegree_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyConvexSet>()?;
    m.add_class::<PyLinearOperator>()?;
    m.add_function(wrap_pyfunction!(brouwer_degree, m)?)?;
    m.add_function(wrap_pyfunction!(list_scenarios, m)?)?;
    m.add("DegreeError", m.py().get_type::<DegreeError>())?;
    m.add("InconclusiveError", m.py().get_type::<InconclusiveError>())?;
    Ok(())
}
