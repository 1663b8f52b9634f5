//! Python bindings for the `chdyn` solver and stationary analysis.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use chdyn::config::ExperimentConfig;
use chdyn::discretization::{DiscreteOperators, Domain, Field};
use chdyn::experiments::{self, Setup};
use chdyn::potentials::{Extended, PotentialKind, PotentialSpec, RegularizedPotential};
use chdyn::stationary::{self, BvpSolution, CriticalFlux, ShootOptions, StationaryProblem};

fn solver_err(e: chdyn::Error) -> PyErr {
    match e {
        chdyn::Error::Domain { .. }
        | chdyn::Error::InvalidParameter(_)
        | chdyn::Error::NonZeroMean { .. }
        | chdyn::Error::Shape { .. }
        | chdyn::Error::UnsupportedDomain(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn extended(v: Extended) -> f64 {
    v.finite().unwrap_or(f64::INFINITY)
}

/// Singular bulk potential `f` together with the linear shift `lambda`.
#[pyclass(name = "Potential", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyPotential {
    spec: PotentialSpec,
}

impl PyPotential {
    fn make(spec: PotentialSpec) -> PyResult<Self> {
        spec.validate().map_err(solver_err)?;
        Ok(Self { spec })
    }

    fn regularized(&self, n: u32) -> PyResult<RegularizedPotential> {
        RegularizedPotential::new(self.spec, n).map_err(solver_err)
    }
}

#[pymethods]
impl PyPotential {
    #[staticmethod]
    #[pyo3(signature = (kappa0 = 0.0, kappa1 = 1.0, lam = 0.0))]
    fn logarithmic(kappa0: f64, kappa1: f64, lam: f64) -> PyResult<Self> {
        Self::make(PotentialSpec::new(PotentialKind::Logarithmic { kappa0, kappa1 }, lam))
    }

    #[staticmethod]
    #[pyo3(signature = (kappa = 1.0, p = 3.0, lam = 0.0))]
    fn power(kappa: f64, p: f64, lam: f64) -> PyResult<Self> {
        Self::make(PotentialSpec::power(kappa, p).with_lambda(lam))
    }

    #[staticmethod]
    #[pyo3(signature = (a = 1.0, lam = 0.0))]
    fn smooth(a: f64, lam: f64) -> PyResult<Self> {
        Self::make(PotentialSpec::smooth(a).with_lambda(lam))
    }

    fn f(&self, u: f64) -> PyResult<f64> {
        self.spec.f(u).map_err(solver_err)
    }

    fn f_prime(&self, u: f64) -> PyResult<f64> {
        self.spec.f_prime(u).map_err(solver_err)
    }

    /// `F(u) = int_0^u f`; `inf` where it diverges.
    fn antiderivative(&self, u: f64) -> PyResult<f64> {
        self.spec.antiderivative(u).map(extended).map_err(solver_err)
    }

    fn boundary_limit(&self) -> f64 {
        extended(self.spec.boundary_limit())
    }

    fn is_singular(&self) -> bool {
        self.spec.is_singular()
    }

    /// Regularized `f_N(u)`, defined for every real `u`.
    fn f_n(&self, u: f64, n: u32) -> PyResult<f64> {
        Ok(self.regularized(n)?.f_n(u))
    }

    #[pyo3(name = "F_n")]
    fn big_f_n(&self, u: f64, n: u32) -> PyResult<f64> {
        Ok(self.regularized(n)?.big_f_n(u))
    }

    fn __repr__(&self) -> String {
        format!("Potential({:?}, lambda={})", self.spec.kind, self.spec.lambda)
    }
}

/// Discrete operators on the interval or the periodic strip.
#[pyclass(name = "Operators", frozen)]
struct PyOperators {
    ops: Arc<DiscreteOperators>,
}

impl PyOperators {
    fn field(&self, bulk: Vec<f64>, trace: Vec<f64>) -> PyResult<Field> {
        Field::new(self.ops.domain(), bulk, trace).map_err(solver_err)
    }
}

#[pymethods]
impl PyOperators {
    #[staticmethod]
    fn interval(n: usize) -> PyResult<Self> {
        Ok(Self { ops: Arc::new(DiscreteOperators::new(Domain::Interval { n }).map_err(solver_err)?) })
    }

    #[staticmethod]
    fn strip(lx: f64, nx: usize, ny: usize) -> PyResult<Self> {
        Ok(Self { ops: Arc::new(DiscreteOperators::new(Domain::Strip { lx, nx, ny }).map_err(solver_err)?) })
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.ops.n_nodes()
    }

    #[getter]
    fn n_boundary(&self) -> usize {
        self.ops.n_boundary()
    }

    /// Node coordinates as `(x, y)` pairs; on the interval `x` is the coordinate and `y = 0`.
    fn coords(&self) -> Vec<(f64, f64)> {
        self.ops.domain().coords()
    }

    fn mean(&self, v: Vec<f64>) -> PyResult<f64> {
        if v.len() != self.ops.n_nodes() {
            return Err(PyValueError::new_err(format!("expected {} values, got {}", self.ops.n_nodes(), v.len())));
        }
        Ok(self.ops.mean(&v))
    }

    /// Zero-mean solution of `-Lap w = r` with Neumann conditions.
    fn inverse_laplacian(&self, r: Vec<f64>) -> PyResult<Vec<f64>> {
        self.ops.inverse_laplacian(&r).map_err(solver_err)
    }

    fn phi_w_distance(&self, bulk_a: Vec<f64>, trace_a: Vec<f64>, bulk_b: Vec<f64>, trace_b: Vec<f64>) -> PyResult<f64> {
        let (a, b) = (self.field(bulk_a, trace_a)?, self.field(bulk_b, trace_b)?);
        self.ops.phi_w_distance(&a, &b).map_err(solver_err)
    }
}

#[pyfunction]
fn time_of_flight(potential: &PyPotential, s: f64) -> f64 {
    stationary::time_of_flight(&potential.spec, s)
}

/// `(s_star, K_plus)`, or `None` when `F(1)` is infinite.
#[pyfunction]
fn critical_flux(potential: &PyPotential) -> PyResult<Option<(f64, f64)>> {
    Ok(match stationary::critical_k(&potential.spec).map_err(solver_err)? {
        CriticalFlux::Finite { s_star, k_plus } => Some((s_star, k_plus)),
        CriticalFlux::NotApplicable => None,
    })
}

#[pyfunction]
fn classify(potential: &PyPotential, k: f64) -> PyResult<String> {
    let c = stationary::classify(&StationaryProblem { potential: potential.spec, k }).map_err(solver_err)?;
    Ok(format!("{c:?}"))
}

fn profile_dict<'py>(py: Python<'py>, p: &stationary::ShootingResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("s", p.s)?;
    d.set_item("x", p.x.clone())?;
    d.set_item("y", p.y.clone())?;
    d.set_item("yp", p.yp.clone())?;
    d.set_item("x_hit", p.x_hit())?;
    d.set_item("first_integral_defect", p.first_integral_defect)?;
    Ok(d)
}

#[pyfunction]
fn shoot<'py>(py: Python<'py>, potential: &PyPotential, s: f64) -> PyResult<Bound<'py, PyDict>> {
    let r = stationary::shoot(&potential.spec, s, ShootOptions::default()).map_err(solver_err)?;
    profile_dict(py, &r)
}

/// Odd solution of `y'' = f(y)`, `y'(1) = K`, or the saturated profile above the critical flux.
#[pyfunction]
fn solve_bvp<'py>(py: Python<'py>, potential: &PyPotential, k: f64) -> PyResult<Bound<'py, PyDict>> {
    let sol = stationary::solve_bvp(&StationaryProblem { potential: potential.spec, k }).map_err(solver_err)?;
    let d = profile_dict(py, sol.profile())?;
    d.set_item("classification", format!("{:?}", sol.classification()))?;
    if let BvpSolution::VariationalOnly { defect, .. } = sol {
        d.set_item("defect", defect)?;
    }
    Ok(d)
}

/// Runs the `simulate` experiment described by a `key = value` configuration text.
#[pyfunction]
#[pyo3(signature = (config = ""))]
fn simulate<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyDict>> {
    let cfg = ExperimentConfig::parse(config).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let setup = Setup::from_config(&cfg).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let rep = py.detach(|| experiments::run_simulate(&setup)).map_err(solver_err)?;
    let traj = &rep.trajectory;
    let d = PyDict::new(py);
    d.set_item("t", traj.records.iter().map(|r| r.state.t).collect::<Vec<_>>())?;
    d.set_item("mass", traj.records.iter().map(|r| r.diagnostics.mass).collect::<Vec<_>>())?;
    d.set_item("energy", traj.records.iter().map(|r| r.diagnostics.energy.total).collect::<Vec<_>>())?;
    d.set_item("boundary_margin", traj.records.iter().map(|r| r.diagnostics.boundary_margin).collect::<Vec<_>>())?;
    d.set_item("initial_bulk", traj.initial.field.bulk.clone())?;
    d.set_item("bulk", traj.last().field.bulk.clone())?;
    d.set_item("trace", traj.last().field.trace.clone())?;
    d.set_item("mass_drift", rep.mass_drift)?;
    Ok(d)
}

#[pymodule]
pub fn pychdyn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPotential>()?;
    m.add_class::<PyOperators>()?;
    m.add_function(wrap_pyfunction!(time_of_flight, m)?)?;
    m.add_function(wrap_pyfunction!(critical_flux, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(shoot, m)?)?;
    m.add_function(wrap_pyfunction!(solve_bvp, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add("SCHEME", chdyn::solver::SCHEME)?;
    Ok(())
}
