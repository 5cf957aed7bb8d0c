//! Python bindings for `servosim`.
//!
//! Parameters and reports cross the boundary as plain dicts/JSON so they
//! stay interchangeable with the files the CLI reads and writes.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use servosim::dataset::{self, Family, SynthOptions, TrajectoryType};
use servosim::friction::{self, FrictionInputs, ModelTag};
use servosim::ident::{self, IdentifyOptions, ParamSpace};
use servosim::sim::{self, Boundary, SimState};
use servosim::Error;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io { .. } => PyOSError::new_err(err.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn json_to_py(py: Python<'_>, value: &serde_json::Value) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| to_py(e.into()))?;
    let json = py.import("json")?;
    Ok(json.call_method1("loads", (text,))?.unbind())
}

fn py_to_json(py: Python<'_>, obj: &Bound<'_, PyAny>) -> PyResult<String> {
    let json = py.import("json")?;
    json.call_method1("dumps", (obj,))?.extract()
}

/// Friction parameters of one model.
#[pyclass(module = "servosim_py", name = "FrictionParams", skip_from_py_object)]
#[derive(Clone)]
pub struct PyFrictionParams {
    inner: friction::FrictionParams,
}

#[pymethods]
impl PyFrictionParams {
    /// `FrictionParams("M4", k_v=0.1, k_c=0.05, ...)`
    #[new]
    #[pyo3(signature = (model, **kwargs))]
    fn new(py: Python<'_>, model: &str, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let dict = match kwargs {
            Some(d) => d.copy()?,
            None => PyDict::new(py),
        };
        dict.set_item("model", model.trim().to_ascii_uppercase())?;
        Self::from_json(&py_to_json(py, dict.as_any())?)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: friction::FrictionParams =
            serde_json::from_str(text).map_err(|e| to_py(e.into()))?;
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_vector(model: &str, values: Vec<f64>) -> PyResult<Self> {
        let tag: ModelTag = model.parse().map_err(to_py)?;
        let inner = friction::FrictionParams::from_vector(tag, &values).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn model(&self) -> String {
        self.inner.tag().to_string()
    }

    fn vector(&self) -> Vec<f64> {
        self.inner.to_vector()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| to_py(e.into()))
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let value = serde_json::to_value(self.inner).map_err(|e| to_py(e.into()))?;
        json_to_py(py, &value)
    }

    /// Friction torque budget at one state.
    fn budget(&self, tau_m: f64, tau_e: f64, omega: f64) -> PyResult<f64> {
        friction::friction_budget(&self.inner, FrictionInputs::new(tau_m, tau_e, omega)).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let fields: Vec<String> = self
            .inner
            .named_values()
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        format!("FrictionParams({:?}, {})", self.model(), fields.join(", "))
    }

    fn __eq__(&self, other: PyRef<'_, Self>) -> bool {
        self.inner == other.inner
    }
}

/// A trajectory log: header plus `(t, target, measured)` samples.
#[pyclass(module = "servosim_py", name = "TrajectoryLog", skip_from_py_object)]
#[derive(Clone)]
pub struct PyTrajectoryLog {
    inner: dataset::TrajectoryLog,
}

#[pymethods]
impl PyTrajectoryLog {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: dataset::TrajectoryLog::load(path).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: dataset::TrajectoryLog::from_json(text).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id().to_string()
    }

    #[getter]
    fn trajectory(&self) -> String {
        self.inner.header.trajectory.to_string()
    }

    fn times(&self) -> Vec<f64> {
        self.inner.times()
    }

    /// Targets, with `None` where the actuator is released.
    fn targets(&self) -> Vec<Option<f64>> {
        self.inner.targets()
    }

    fn measured(&self) -> Vec<f64> {
        self.inner.measured()
    }

    #[getter]
    fn ground_truth(&self) -> Option<PyFrictionParams> {
        self.inner.ground_truth.map(|inner| PyFrictionParams { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("TrajectoryLog({:?}, {} samples)", self.inner.id(), self.inner.len())
    }
}

/// Result of one identification run.
#[pyclass(module = "servosim_py", name = "IdentResult", skip_from_py_object)]
#[derive(Clone)]
pub struct PyIdentResult {
    inner: ident::IdentResult,
}

#[pymethods]
impl PyIdentResult {
    #[getter]
    fn model(&self) -> String {
        self.inner.model.to_string()
    }

    #[getter]
    fn params(&self) -> PyFrictionParams {
        PyFrictionParams {
            inner: self.inner.friction,
        }
    }

    #[getter]
    fn identification_mae(&self) -> f64 {
        self.inner.identification_mae
    }

    #[getter]
    fn validation_mae(&self) -> Option<f64> {
        self.inner.validation_mae
    }

    #[getter]
    fn evaluations(&self) -> usize {
        self.inner.evaluations
    }

    #[getter]
    fn trace(&self) -> Vec<f64> {
        self.inner.trace.clone()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ident::IdentResult::from_json(text).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "IdentResult({}, identification_mae={:.3e}, validation_mae={:?})",
            self.inner.model, self.inner.identification_mae, self.inner.validation_mae
        )
    }
}

fn collect_logs(logs: &[PyRef<'_, PyTrajectoryLog>]) -> Vec<dataset::TrajectoryLog> {
    logs.iter().map(|l| l.inner.clone()).collect()
}

/// Stop torque `-(J/dt * omega + tau_m + tau_e)`.
#[pyfunction]
fn stop_torque(inertia: f64, dt: f64, omega: f64, tau_m: f64, tau_e: f64) -> PyResult<f64> {
    friction::stop_torque(inertia, dt, omega, tau_m, tau_e).map_err(to_py)
}

/// Clip a stop torque to `[-budget, budget]`.
#[pyfunction]
fn applied_friction(stop: f64, budget: f64) -> PyResult<f64> {
    friction::applied_friction(stop, budget).map_err(to_py)
}

/// `(drive, backdrive)` static boundaries; `None` marks an unbounded side.
#[pyfunction]
#[pyo3(signature = (params, tau_m, velocity = 0.0))]
fn static_boundary(params: PyRef<'_, PyFrictionParams>, tau_m: f64, velocity: f64) -> PyResult<(Option<f64>, Option<f64>)> {
    let b = sim::static_boundary_at(&params.inner, tau_m, velocity).map_err(to_py)?;
    Ok((b.tau_drive.value(), b.tau_backdrive.value()))
}

/// Diagram rows `(tau_m, velocity, drive, backdrive)`.
#[pyfunction]
#[pyo3(signature = (params, tau_m_grid, velocity_levels = vec![0.0]))]
fn diagram(
    params: PyRef<'_, PyFrictionParams>,
    tau_m_grid: Vec<f64>,
    velocity_levels: Vec<f64>,
) -> PyResult<Vec<(f64, f64, Option<f64>, Option<f64>)>> {
    let rows = sim::diagram(&params.inner, &tau_m_grid, &velocity_levels).map_err(to_py)?;
    Ok(rows
        .iter()
        .map(|r| (r.tau_m, r.velocity, Boundary::value(&r.tau_drive), r.tau_backdrive.value()))
        .collect())
}

/// Equivalent Coulomb-Viscous coefficients `(K_c_eff, K_v_eff)`.
#[pyfunction]
fn equivalent_cv(params: PyRef<'_, PyFrictionParams>, tau_m: f64, tau_e_prev: f64, omega: f64) -> PyResult<(f64, f64)> {
    sim::equivalent_cv_params(&params.inner, tau_m, tau_e_prev, omega).map_err(to_py)
}

/// Replay a log with `params` from rest at the first measured angle; returns simulated angles.
#[pyfunction]
fn simulate(log: PyRef<'_, PyTrajectoryLog>, params: PyRef<'_, PyFrictionParams>) -> PyResult<Vec<f64>> {
    let l = &log.inner;
    let measured = l.measured();
    let out = sim::rollout(
        &l.header.bench,
        &l.header.actuator,
        &params.inner,
        SimState::at_rest(measured[0]),
        &l.targets(),
    )
    .map_err(to_py)?;
    Ok(out.theta)
}

/// Synthesize a family dataset from the built-in presets.
#[pyfunction]
#[pyo3(signature = (family, types = None, noise = 0.002, seed = 0, duration = None, truth = None))]
fn synthesize(
    py: Python<'_>,
    family: &str,
    types: Option<Vec<String>>,
    noise: f64,
    seed: u64,
    duration: Option<f64>,
    truth: Option<PyRef<'_, PyFrictionParams>>,
) -> PyResult<Vec<PyTrajectoryLog>> {
    let family: Family = family.parse().map_err(to_py)?;
    let mut options = SynthOptions::new(family);
    if let Some(types) = types {
        options.types = types
            .iter()
            .map(|t| t.parse::<TrajectoryType>())
            .collect::<servosim::Result<_>>()
            .map_err(to_py)?;
    }
    options.noise_std = noise;
    options.seed = seed;
    options.duration = duration;
    options.truth = truth.map(|t| t.inner);
    let logs = py.detach(|| dataset::synthesize_family(&options)).map_err(to_py)?;
    Ok(logs.into_iter().map(|inner| PyTrajectoryLog { inner }).collect())
}

/// Seeded stratified split; returns `(identification_ids, validation_ids)`.
#[pyfunction]
fn split(logs: Vec<PyRef<'_, PyTrajectoryLog>>, seed: u64) -> PyResult<(Vec<String>, Vec<String>)> {
    let owned = collect_logs(&logs);
    let s = dataset::split_logs(&owned, seed).map_err(to_py)?;
    Ok((s.identification, s.validation))
}

/// Mean absolute angle error of `params` over `logs`.
#[pyfunction]
fn evaluate(py: Python<'_>, params: PyRef<'_, PyFrictionParams>, logs: Vec<PyRef<'_, PyTrajectoryLog>>) -> PyResult<f64> {
    let owned = collect_logs(&logs);
    let p = params.inner;
    py.detach(|| {
        let refs: Vec<&dataset::TrajectoryLog> = owned.iter().collect();
        ident::evaluate(&p, None, &refs)
    })
    .map_err(to_py)
}

/// Identify `model` on `logs` with CMA-ES, optionally scoring on `validation`.
#[pyfunction]
#[pyo3(signature = (logs, model, budget = ident::DEFAULT_BUDGET, seed = 0, fit_motor = false, validation = None))]
fn identify(
    py: Python<'_>,
    logs: Vec<PyRef<'_, PyTrajectoryLog>>,
    model: &str,
    budget: usize,
    seed: u64,
    fit_motor: bool,
    validation: Option<Vec<PyRef<'_, PyTrajectoryLog>>>,
) -> PyResult<PyIdentResult> {
    let tag: ModelTag = model.parse().map_err(to_py)?;
    let owned = collect_logs(&logs);
    let held_out = validation.as_deref().map(collect_logs).unwrap_or_default();
    let options = IdentifyOptions {
        budget,
        seed,
        ..IdentifyOptions::default()
    };
    let inner = py
        .detach(|| {
            let refs: Vec<&dataset::TrajectoryLog> = owned.iter().collect();
            let mut result = ident::identify(&refs, &ParamSpace::new(tag, fit_motor), &options)?;
            if !held_out.is_empty() {
                let val: Vec<&dataset::TrajectoryLog> = held_out.iter().collect();
                result.validate_on(&val)?;
            }
            Ok::<_, Error>(result)
        })
        .map_err(to_py)?;
    Ok(PyIdentResult { inner })
}

#[pymodule]
fn servosim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFrictionParams>()?;
    m.add_class::<PyTrajectoryLog>()?;
    m.add_class::<PyIdentResult>()?;
    m.add_function(wrap_pyfunction!(stop_torque, m)?)?;
    m.add_function(wrap_pyfunction!(applied_friction, m)?)?;
    m.add_function(wrap_pyfunction!(static_boundary, m)?)?;
    m.add_function(wrap_pyfunction!(diagram, m)?)?;
    m.add_function(wrap_pyfunction!(equivalent_cv, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(split, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(identify, m)?)?;
    m.add("MODELS", ModelTag::ALL.iter().map(|t| t.to_string()).collect::<Vec<_>>())?;
    Ok(())
}
