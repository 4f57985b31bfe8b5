//! Python bindings: scenarios, admissibility arithmetic, simulation runs and
//! the manufactured-solution verification.

use std::path::{Path, PathBuf};

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ldd_core::config::ScenarioConfig;
use ldd_core::constitutive::RegularityConstants as CoreConstants;
use ldd_core::dd_solver::{GInitMode, SchemeParams};
use ldd_core::output::nodal_fields;
use ldd_core::problem::Problem;
use ldd_core::timestepper::{self, AdmissibilityReport, SolutionTrajectory};
use ldd_core::verification::{self, VerifyOptions, CATALOG};
use ldd_core::Error;

create_exception!(ldd, LddError, PyException);
create_exception!(ldd, ConfigError, LddError);
create_exception!(ldd, AdmissibilityError, LddError);
create_exception!(ldd, NonConvergenceError, LddError);
create_exception!(ldd, OracleError, LddError);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Config,
    Admissibility,
    NonConvergence,
    Oracle,
    Other,
}

fn kind(e: &Error) -> Kind {
    match e {
        Error::Config(_) | Error::ConfigLine { .. } | Error::Certification { .. } | Error::Catalog(_) => Kind::Config,
        Error::Admissibility(_) | Error::NoAdmissibleStep { .. } => Kind::Admissibility,
        Error::NonConvergence { .. } | Error::Diverged { .. } => Kind::NonConvergence,
        Error::Oracle(_) => Kind::Oracle,
        _ => Kind::Other,
    }
}

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match kind(&e) {
        Kind::Config => ConfigError::new_err(msg),
        Kind::Admissibility => AdmissibilityError::new_err(msg),
        Kind::NonConvergence => NonConvergenceError::new_err(msg),
        Kind::Oracle => OracleError::new_err(msg),
        Kind::Other => LddError::new_err(msg),
    }
}

/// Per-layer regularity constants of the constitutive laws.
#[pyclass(name = "RegularityConstants", from_py_object)]
#[derive(Clone)]
struct PyConstants {
    inner: CoreConstants,
}

#[pymethods]
impl PyConstants {
    #[new]
    #[pyo3(signature = (lipschitz_s, lipschitz_kw, lipschitz_kg, mobility_lower, mobility_upper = f64::INFINITY))]
    fn new(lipschitz_s: f64, lipschitz_kw: f64, lipschitz_kg: f64, mobility_lower: f64, mobility_upper: f64) -> PyResult<Self> {
        let inner = CoreConstants {
            lipschitz_s,
            lipschitz_kw,
            lipschitz_kg,
            mobility_lower,
            mobility_upper,
        };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn lipschitz_s(&self) -> f64 {
        self.inner.lipschitz_s
    }

    #[getter]
    fn lipschitz_kw(&self) -> f64 {
        self.inner.lipschitz_kw
    }

    #[getter]
    fn lipschitz_kg(&self) -> f64 {
        self.inner.lipschitz_kg
    }

    #[getter]
    fn mobility_lower(&self) -> f64 {
        self.inner.mobility_lower
    }

    #[getter]
    fn mobility_upper(&self) -> f64 {
        self.inner.mobility_upper
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "RegularityConstants(lipschitz_s={}, lipschitz_kw={}, lipschitz_kg={}, mobility_lower={}, mobility_upper={})",
            c.lipschitz_s, c.lipschitz_kw, c.lipschitz_kg, c.mobility_lower, c.mobility_upper
        )
    }
}

/// `l` is `[[L_w1, L_w2], [L_g1, L_g2]]`.
fn scheme(l: [[f64; 2]; 2], tau: f64) -> SchemeParams {
    let mut p = SchemeParams::uniform(1.0, 1.0, tau);
    p.l = l;
    p
}

fn report_dict<'py>(py: Python<'py>, r: &AdmissibilityReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("tau", r.tau)?;
    d.set_item("M", r.m_used)?;
    d.set_item("tau_max", r.tau_max)?;
    d.set_item("passed", r.passed())?;
    let mut layers = Vec::new();
    for l in &r.layers {
        let ld = PyDict::new(py);
        ld.set_item("parameter_value", l.parameter_value)?;
        ld.set_item("parameter_pass", l.parameter_pass)?;
        ld.set_item("growth", l.growth)?;
        ld.set_item("C", l.c_value)?;
        ld.set_item("time_step_pass", l.time_step_pass)?;
        layers.push(ld);
    }
    d.set_item("layers", layers)?;
    Ok(d)
}

/// Both admissibility conditions per layer at step `tau`.
#[pyfunction]
fn check_admissibility<'py>(
    py: Python<'py>,
    constants: [PyConstants; 2],
    l: [[f64; 2]; 2],
    tau: f64,
    m: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let c = constants.map(|c| c.inner);
    let r = timestepper::check_admissibility(&c, &scheme(l, tau), m).map_err(to_py)?;
    report_dict(py, &r)
}

#[pyfunction]
fn max_stable_tau(constants: [PyConstants; 2], l: [[f64; 2]; 2], m: f64) -> PyResult<f64> {
    let c = constants.map(|c| c.inner);
    timestepper::max_stable_tau(&c, &scheme(l, 0.0), m).map_err(to_py)
}

/// `[[L_w1, L_w2], [L_g1, L_g2]]`
#[pyfunction]
fn suggest_l(constants: [PyConstants; 2]) -> [[f64; 2]; 2] {
    timestepper::suggest_L(&constants.map(|c| c.inner))
}

#[pyfunction]
fn catalog() -> Vec<&'static str> {
    CATALOG.to_vec()
}

/// A parsed and validated scenario file.
#[pyclass(name = "Scenario")]
struct PyScenario {
    config: ScenarioConfig,
    problem: Problem,
}

impl PyScenario {
    fn from_config(config: ScenarioConfig) -> PyResult<Self> {
        let problem = config.build_problem().map_err(to_py)?;
        Ok(Self { config, problem })
    }
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Self::from_config(ScenarioConfig::load(&path).map_err(to_py)?)
    }

    /// Parses scenario text; tabulated-curve paths resolve against `base`.
    #[staticmethod]
    #[pyo3(signature = (text, base = PathBuf::from(".")))]
    fn parse(text: &str, base: PathBuf) -> PyResult<Self> {
        Self::from_config(ScenarioConfig::parse(text, Path::new(&base)).map_err(to_py)?)
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.problem.mesh.nodes.len()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.config.steps
    }

    #[getter]
    fn t_final(&self) -> f64 {
        self.config.t_final
    }

    /// Certified constants of both layers.
    fn constants(&self) -> PyResult<Vec<PyConstants>> {
        let c = self.config.certify().map_err(to_py)?;
        Ok(c.iter().map(|&inner| PyConstants { inner }).collect())
    }

    /// Admissibility report with `auto` choices resolved; also carries the
    /// resolved `L`.
    fn check<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let c = self.config.certify().map_err(to_py)?;
        let s = self.config.settings(&self.problem, c).map_err(to_py)?;
        let r = timestepper::check_admissibility(&c, &s.params, s.gradient_bound).map_err(to_py)?;
        let d = report_dict(py, &r)?;
        d.set_item("L", s.params.l)?;
        d.set_item("suggested_L", timestepper::suggest_L(&c))?;
        Ok(d)
    }

    /// Runs the simulation. Parameter failures raise; a failed time step is
    /// recorded in the returned trajectory.
    #[pyo3(signature = (g_init = None, monitor = None))]
    fn run(&self, py: Python<'_>, g_init: Option<&str>, monitor: Option<bool>) -> PyResult<PyTrajectory> {
        let c = self.config.certify().map_err(to_py)?;
        let mut s = self.config.settings(&self.problem, c).map_err(to_py)?;
        if let Some(mode) = g_init {
            s.g_init = mode.parse::<GInitMode>().map_err(to_py)?;
        }
        if let Some(m) = monitor {
            s.monitor = m;
        }
        let problem = &self.problem;
        let traj = py
            .detach(|| timestepper::run_simulation(problem, &s))
            .map_err(to_py)?;
        Ok(PyTrajectory {
            traj,
            problem: self.problem.clone(),
        })
    }
}

#[pyclass(name = "Trajectory")]
struct PyTrajectory {
    traj: SolutionTrajectory,
    problem: Problem,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.traj.times.clone()
    }

    #[getter]
    fn completed(&self) -> bool {
        self.traj.completed()
    }

    #[getter]
    fn iterations(&self) -> Vec<usize> {
        self.traj.reports.iter().map(|r| r.iterations_used).collect()
    }

    #[getter]
    fn contraction_factors(&self) -> Vec<Option<f64>> {
        self.traj.reports.iter().map(|r| r.contraction_factor).collect()
    }

    #[getter]
    fn gradient_estimates(&self) -> Vec<f64> {
        self.traj.gradient_estimates.clone()
    }

    #[getter]
    fn failure(&self) -> Option<String> {
        self.traj.failure.as_ref().map(|f| format!("step {}: {}", f.time_step, f.message))
    }

    /// Admissibility report the run was started with.
    fn admissibility<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        report_dict(py, &self.traj.admissibility)
    }

    /// Nodal fields `x, y, p_w, p_g, S` at time level `n`.
    fn fields<'py>(&self, py: Python<'py>, n: usize) -> PyResult<Bound<'py, PyDict>> {
        let states = self
            .traj
            .states
            .get(n)
            .ok_or_else(|| pyo3::exceptions::PyIndexError::new_err(format!("no time level {n}")))?;
        let (p_w, p_g, s) = nodal_fields(&self.problem, states);
        let d = PyDict::new(py);
        let nodes = &self.problem.mesh.nodes;
        d.set_item("x", nodes.iter().map(|p| p[0]).collect::<Vec<_>>())?;
        d.set_item("y", nodes.iter().map(|p| p[1]).collect::<Vec<_>>())?;
        d.set_item("p_w", p_w)?;
        d.set_item("p_g", p_g)?;
        d.set_item("S", s)?;
        Ok(d)
    }

    fn __len__(&self) -> usize {
        self.traj.states.len()
    }
}

/// Refinement study of a catalog case against the monolithic oracle.
#[pyfunction]
#[pyo3(signature = (case, levels, tol = 1e-10, lambda_ = 1.0, break_source = false))]
fn verify<'py>(
    py: Python<'py>,
    case: &str,
    levels: Vec<usize>,
    tol: f64,
    lambda_: f64,
    break_source: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let opts = VerifyOptions {
        tol,
        lambda: lambda_,
        break_source,
        ..VerifyOptions::default()
    };
    let s = py
        .detach(|| verification::run_verification(case, &levels, &opts))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("case", &s.case)?;
    d.set_item("passed", s.passed())?;
    d.set_item("orders_w", s.orders[0].clone())?;
    d.set_item("orders_g", s.orders[1].clone())?;
    d.set_item("h", s.levels.iter().map(|l| l.h).collect::<Vec<_>>())?;
    d.set_item("l2_w", s.levels.iter().map(|l| l.errors.l2[0]).collect::<Vec<_>>())?;
    d.set_item("l2_g", s.levels.iter().map(|l| l.errors.l2[1]).collect::<Vec<_>>())?;
    d.set_item(
        "oracle_difference",
        s.levels.iter().map(|l| l.oracle_difference[0].max(l.oracle_difference[1])).collect::<Vec<_>>(),
    )?;
    let checks: Vec<(String, f64, String, bool)> = s
        .checks
        .iter()
        .map(|c| (c.name.clone(), c.value, c.threshold.clone(), c.pass))
        .collect();
    d.set_item("checks", checks)?;
    Ok(d)
}

#[pymodule]
fn ldd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("LddError", py.get_type::<LddError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("AdmissibilityError", py.get_type::<AdmissibilityError>())?;
    m.add("NonConvergenceError", py.get_type::<NonConvergenceError>())?;
    m.add("OracleError", py.get_type::<OracleError>())?;
    m.add_class::<PyConstants>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(check_admissibility, m)?)?;
    m.add_function(wrap_pyfunction!(max_stable_tau, m)?)?;
    m.add_function(wrap_pyfunction!(suggest_l, m)?)?;
    m.add_function(wrap_pyfunction!(catalog, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_kinds() {
        assert_eq!(kind(&Error::config("x")), Kind::Config);
        assert_eq!(kind(&Error::Catalog("x".into())), Kind::Config);
        assert_eq!(kind(&Error::NoAdmissibleStep { layer: 1, value: -1.0 }), Kind::Admissibility);
        assert_eq!(kind(&Error::Oracle("x".into())), Kind::Oracle);
        assert_eq!(kind(&Error::domain("x")), Kind::Other);
    }

    #[test]
    fn module_from_embedded_interpreter() {
        Python::initialize();
        Python::attach(|py| {
            let m = PyModule::new(py, "ldd").unwrap();
            ldd(&m).unwrap();
            let locals = PyDict::new(py);
            locals.set_item("ldd", &m).unwrap();
            py.run(
                cr#"
c = ldd.RegularityConstants(1.0, 1.0, 1.0, 0.5, 1.0)
r = ldd.check_admissibility([c, c], [[2.0, 2.0], [2.0, 2.0]], 0.1, 1.0)
assert abs(r["layers"][0]["C"] - 0.3) < 1e-15, r
assert r["tau_max"] == 0.25 and r["passed"]
assert ldd.suggest_l([c, c]) == [[2.0, 2.0], [2.0, 2.0]]
try:
    ldd.verify("nonesuch", [4])
    raise AssertionError("expected ConfigError")
except ldd.ConfigError:
    pass
assert issubclass(ldd.NonConvergenceError, ldd.LddError)
"#,
                None,
                Some(&locals),
            )
            .unwrap();
        });
    }

    #[test]
    fn scheme_layout() {
        let p = scheme([[1.0, 2.0], [3.0, 4.0]], 0.5);
        assert_eq!(p.l(ldd_core::constitutive::Phase::Nonwetting, ldd_core::mesh::Subdomain::One), 3.0);
        assert_eq!(p.tau, 0.5);
    }
}
