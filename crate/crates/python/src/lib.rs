//! Python bindings for the prevalence estimators, their asymptotic intervals
//! and the Monte Carlo study.
//!
//! Structured results (estimate bundles, asymptotic quantities, experiment
//! reports) are returned as plain Python dicts.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use prevalence_core::asymptotics::{self, CiTarget};
use prevalence_core::experiments::{self, scenarios};
use prevalence_core::maxent::{self, SimplexSlab};
use prevalence_core::model;
use prevalence_core::sampler::draw_outcome;
use prevalence_core::{
    estimators, Error, MaxEntPrior, Mechanism, PopulationSpec, RngStream, ScenarioConfig, TestingOutcome,
};

/// Maps library errors to `ValueError` for bad input and `RuntimeError`
/// for failures during computation.
pub fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::RejectionStarvation { .. } | Error::NegativeVarianceCombination(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// How the corrected estimator learns the symptom-class shares.
#[pyclass(name = "Mechanism", module = "prevalence", frozen)]
pub struct PyMechanism(pub Mechanism);

#[pymethods]
impl PyMechanism {
    /// Uniform testing: the corrected estimate is the raw positive rate.
    #[staticmethod]
    fn mcar() -> Self {
        Self(Mechanism::Mcar)
    }

    /// Symptom-driven testing with known class shares.
    #[staticmethod]
    fn mar(stratum_shares: Vec<f64>) -> PyResult<Self> {
        let mech = Mechanism::Mar { stratum_shares };
        mech.validate().map_err(to_py_err)?;
        Ok(Self(mech))
    }

    /// Two classes, symptomatic share uniform between `N_T1 / N` and `N_T1 / N_T`.
    #[staticmethod]
    fn maxent_interval() -> Self {
        Self(Mechanism::MaxEnt(MaxEntPrior::Interval))
    }

    /// Class shares uniform on the box-constrained simplex `lower <= rho <= upper`.
    #[staticmethod]
    #[pyo3(signature = (lower, upper, samples = 100_000, seed = 0))]
    fn maxent_slab(lower: Vec<f64>, upper: Vec<f64>, samples: u64, seed: u64) -> PyResult<Self> {
        let slab = SimplexSlab::new(lower, upper).map_err(to_py_err)?;
        let mech = Mechanism::MaxEnt(MaxEntPrior::Slab { slab, samples, seed });
        mech.validate().map_err(to_py_err)?;
        Ok(Self(mech))
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.0.name()
    }

    fn __repr__(&self) -> String {
        format!("Mechanism({})", serde_json::to_string(&self.0).unwrap_or_default())
    }
}

/// Counts of tested individuals by symptom class and infection status.
#[pyclass(name = "TestingOutcome", module = "prevalence", frozen)]
pub struct PyTestingOutcome(pub TestingOutcome);

#[pymethods]
impl PyTestingOutcome {
    /// `counts[s] = [tested negatives, tested positives]` in class `s`, out
    /// of a population of `n`.
    #[new]
    fn new(n: u64, counts: Vec<[u64; 2]>) -> PyResult<Self> {
        TestingOutcome::new(n, counts).map(Self).map_err(to_py_err)
    }

    #[getter]
    fn n(&self) -> u64 {
        self.0.n()
    }

    #[getter]
    fn counts(&self) -> Vec<[u64; 2]> {
        self.0.counts().to_vec()
    }

    #[getter]
    fn tested(&self) -> u64 {
        self.0.tested()
    }

    #[getter]
    fn positive(&self) -> u64 {
        self.0.positive()
    }

    /// Raw and corrected prevalence estimates with active information.
    fn estimate<'py>(&self, py: Python<'py>, mechanism: &PyMechanism) -> PyResult<Bound<'py, PyAny>> {
        let bundle = estimators::estimate(&self.0, &mechanism.0).map_err(to_py_err)?;
        to_dict(py, &bundle)
    }

    /// Estimates with plug-in standard errors and `1 - alpha` intervals.
    #[pyo3(signature = (mechanism, alpha = 0.05))]
    fn estimate_with_intervals<'py>(
        &self,
        py: Python<'py>,
        mechanism: &PyMechanism,
        alpha: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let report = asymptotics::estimate_with_intervals(&self.0, &mechanism.0, alpha).map_err(to_py_err)?;
        to_dict(py, &report)
    }

    fn __repr__(&self) -> String {
        format!("TestingOutcome(n={}, counts={:?})", self.0.n(), self.0.counts())
    }
}

/// Population stratified by symptom class and infection status.
#[pyclass(name = "PopulationSpec", module = "prevalence", frozen)]
pub struct PyPopulationSpec(pub PopulationSpec);

#[pymethods]
impl PyPopulationSpec {
    /// `shares[s] = [rho_s0, rho_s1]` must sum to 1 and give whole numbers
    /// of people at size `n`; `testing[s] = [pi_s0, pi_s1]`.
    #[new]
    fn new(n: u64, shares: Vec<[f64; 2]>, testing: Vec<[f64; 2]>) -> PyResult<Self> {
        PopulationSpec::new(n, &shares, testing).map(Self).map_err(to_py_err)
    }

    #[staticmethod]
    fn from_sizes(sizes: Vec<[u64; 2]>, testing: Vec<[f64; 2]>) -> PyResult<Self> {
        PopulationSpec::from_sizes(sizes, testing).map(Self).map_err(to_py_err)
    }

    #[getter]
    fn n(&self) -> u64 {
        self.0.n()
    }

    #[getter]
    fn sizes(&self) -> Vec<[u64; 2]> {
        self.0.sizes().to_vec()
    }

    #[getter]
    fn testing(&self) -> Vec<[f64; 2]> {
        self.0.testing().to_vec()
    }

    #[getter]
    fn stratum_shares(&self) -> Vec<f64> {
        self.0.stratum_shares()
    }

    /// Population prevalence `p0`.
    fn prevalence(&self) -> f64 {
        model::population_prevalence(&self.0)
    }

    /// Expected prevalence among the tested, `p`.
    fn testing_prevalence(&self) -> PyResult<f64> {
        model::testing_prevalence(&self.0).map_err(to_py_err)
    }

    /// `ln(p / p0)` in nats.
    fn active_info_testing(&self) -> PyResult<f64> {
        model::active_info_testing(&self.0).map_err(to_py_err)
    }

    /// Asymptotic targets and variance components under `mechanism`.
    fn exact_quantities<'py>(&self, py: Python<'py>, mechanism: &PyMechanism) -> PyResult<Bound<'py, PyAny>> {
        let q = model::exact_quantities(&self.0, &mechanism.0).map_err(to_py_err)?;
        to_dict(py, &q)
    }

    /// One testing outcome drawn from the stream `(seed, stream)`.
    #[pyo3(signature = (seed, stream = 0))]
    fn draw(&self, seed: u64, stream: u64) -> PyTestingOutcome {
        PyTestingOutcome(draw_outcome(&self.0, &mut RngStream::new(seed, stream).rng()))
    }

    fn __repr__(&self) -> String {
        format!("PopulationSpec(n={}, sizes={:?}, testing={:?})", self.0.n(), self.0.sizes(), self.0.testing())
    }
}

/// Logit-scale `1 - alpha` interval for a prevalence estimate; returns `(lo, hi)`.
#[pyfunction]
#[pyo3(signature = (estimate, sigma, alpha = 0.05))]
fn ci_logit(estimate: f64, sigma: f64, alpha: f64) -> PyResult<(f64, f64)> {
    let ci = asymptotics::ci_logit_prevalence(estimate, sigma, alpha, CiTarget::P0).map_err(to_py_err)?;
    Ok((ci.lo, ci.hi))
}

/// Closed-form two-class shares `(rho_0, rho_1)` from `N`, `N_T` and `N_T1`.
#[pyfunction]
fn covid_shares(n: u64, n_tested: u64, n_tested_symptomatic: u64) -> PyResult<(f64, f64)> {
    maxent::covid_shares(n, n_tested, n_tested_symptomatic).map_err(to_py_err)
}

/// Monte Carlo mean of the uniform density on a box-constrained simplex.
#[pyfunction]
#[pyo3(signature = (lower, upper, samples = 100_000, seed = 0, stream = 0))]
fn expected_shares<'py>(
    py: Python<'py>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    samples: u64,
    seed: u64,
    stream: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let slab = SimplexSlab::new(lower, upper).map_err(to_py_err)?;
    // release the interpreter while sampling
    let est = py
        .detach(|| maxent::expected_shares(&slab, RngStream::new(seed, stream), samples))
        .map_err(to_py_err)?;
    to_dict(py, &est)
}

/// JSON text of a built-in scenario: `mcar`, `mar`, `mnar`,
/// `coverage_small` or `coverage_large`.
#[pyfunction]
fn scenario_config(name: &str) -> PyResult<String> {
    let cfg = scenarios::all()
        .into_iter()
        .find(|c| c.label == name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown scenario '{name}'")))?;
    serde_json::to_string_pretty(&cfg).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Runs a scenario given as JSON text and returns the full report.
#[pyfunction]
#[pyo3(signature = (config_json, seed = None))]
fn run_experiment<'py>(py: Python<'py>, config_json: &str, seed: Option<u64>) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = ScenarioConfig::from_json(config_json).map_err(to_py_err)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let report = py.detach(|| experiments::run_experiment(&cfg)).map_err(to_py_err)?;
    to_dict(py, &report)
}

#[pymodule]
pub fn prevalence(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyMechanism>()?;
    m.add_class::<PyTestingOutcome>()?;
    m.add_class::<PyPopulationSpec>()?;
    m.add_function(wrap_pyfunction!(ci_logit, m)?)?;
    m.add_function(wrap_pyfunction!(covid_shares, m)?)?;
    m.add_function(wrap_pyfunction!(expected_shares, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
