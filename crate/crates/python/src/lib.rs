//! Python bindings: grids, states, steppers, observables, the scalar oracle
//! and the Monte Carlo drivers.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList, PyTuple};

use ssexp_cli::{resolve, RunConfig, Subcommand};
use ssexp_core::noise::{sample_increment, sample_stream, CovarianceSpec, NoiseIncrement};
use ssexp_core::observables::{energy, mass, momentum};
use ssexp_core::scalar_oracle::{exact_second_moment, moment_recursion, ScalarProblem};
use ssexp_core::spectral::apply_semigroup;
use ssexp_core::{
    fit_slope as core_fit_slope, run_strong_error, run_trace, Fourier, GridSpec, InitialCondition,
    NoiseMode, Observable, PotentialKind, ProblemSpec, SchemeKind, SpectralState, Stepper as CoreStepper,
    C64,
};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn grid(num_modes: usize) -> PyResult<GridSpec> {
    GridSpec::new(num_modes).map_err(value_err)
}

/// Spectral state: Fourier coefficients in FFT storage order.
#[pyclass(module = "ssexp", name = "State", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyState {
    inner: SpectralState,
}

#[pymethods]
impl PyState {
    #[new]
    fn new(coeffs: Vec<C64>) -> PyResult<Self> {
        let g = grid(coeffs.len())?;
        Ok(Self {
            inner: SpectralState::from_coeffs(g, coeffs).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn zeros(num_modes: usize) -> PyResult<Self> {
        Ok(Self {
            inner: SpectralState::zeros(grid(num_modes)?),
        })
    }

    /// Interpolant of `zero`, `bump` (2/(2 − cos x)) or `gaussian` (exp(−5(x − π)²)).
    #[staticmethod]
    fn initial(name: &str, num_modes: usize) -> PyResult<Self> {
        let ic: InitialCondition = name.parse().map_err(value_err)?;
        Ok(Self {
            inner: ic.state(grid(num_modes)?),
        })
    }

    #[staticmethod]
    fn from_physical(samples: Vec<C64>) -> PyResult<Self> {
        let g = grid(samples.len())?;
        Ok(Self {
            inner: Fourier::new(g).from_physical(&samples).map_err(value_err)?,
        })
    }

    #[getter]
    fn num_modes(&self) -> usize {
        self.inner.grid().num_modes()
    }

    #[getter]
    fn coeffs(&self) -> Vec<C64> {
        self.inner.coeffs().to_vec()
    }

    /// Coefficient of signed mode `n`; zero outside the grid.
    fn coeff(&self, n: i64) -> C64 {
        self.inner.coeff(n)
    }

    fn to_physical(&self) -> Vec<C64> {
        Fourier::new(self.inner.grid()).to_physical(&self.inner)
    }

    fn mass(&self) -> f64 {
        mass(&self.inner)
    }

    fn energy(&self) -> f64 {
        energy(&self.inner, None)
    }

    fn momentum(&self) -> f64 {
        momentum(&self.inner)
    }

    /// Free flow `e^{−itΔ}` applied for time `t`.
    fn evolve_free(&self, t: f64) -> Self {
        Self {
            inner: apply_semigroup(&self.inner, t),
        }
    }

    fn __len__(&self) -> usize {
        self.num_modes()
    }

    fn __repr__(&self) -> String {
        format!("State(num_modes={}, mass={:.6e})", self.num_modes(), self.mass())
    }
}

/// Diagonal covariance `λ_n = 1/(1 + |n|^s)`.
#[pyclass(module = "ssexp", name = "Covariance", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyCovariance {
    inner: CovarianceSpec,
}

#[pymethods]
impl PyCovariance {
    #[new]
    #[pyo3(signature = (num_modes, exponent, symmetric = false))]
    fn new(num_modes: usize, exponent: f64, symmetric: bool) -> PyResult<Self> {
        let mut inner = CovarianceSpec::power_decay(grid(num_modes)?, exponent);
        if symmetric {
            inner = inner.symmetric();
        }
        Ok(Self { inner })
    }

    /// Explicit eigenvalues for modes `-M/2 .. M/2 - 1`, in that order.
    #[staticmethod]
    fn explicit(eigenvalues: Vec<f64>) -> PyResult<Self> {
        let g = grid(eigenvalues.len())?;
        Ok(Self {
            inner: CovarianceSpec::explicit(g, &eigenvalues).map_err(value_err)?,
        })
    }

    fn eigenvalue(&self, n: i64) -> f64 {
        self.inner.eigenvalue(n)
    }

    fn trace_q(&self) -> f64 {
        self.inner.trace_q()
    }

    fn trace_grad_q_grad(&self) -> f64 {
        self.inner.trace_grad_q_grad()
    }

    fn momentum_drift_rate(&self) -> f64 {
        self.inner.momentum_drift_rate()
    }

    /// `count` successive increments of length `dt` from child stream
    /// `sample_index` of `seed`.
    #[pyo3(signature = (dt, count, seed, sample_index = 0))]
    fn sample_increments(&self, dt: f64, count: usize, seed: u64, sample_index: u64) -> PyResult<Vec<Vec<C64>>> {
        let mut rng = sample_stream(seed, sample_index);
        (0..count)
            .map(|_| {
                sample_increment(&self.inner, dt, &mut rng)
                    .map(|w| w.coeffs)
                    .map_err(value_err)
            })
            .collect()
    }
}

/// One time-stepping scheme on a fixed problem and step size.
#[pyclass(module = "ssexp", name = "Stepper", frozen)]
struct PyStepper {
    inner: CoreStepper,
}

#[pymethods]
impl PyStepper {
    #[new]
    #[pyo3(signature = (scheme, covariance, k, noise = "additive", potential = "none"))]
    fn new(scheme: &str, covariance: &PyCovariance, k: f64, noise: &str, potential: &str) -> PyResult<Self> {
        let kind: SchemeKind = scheme.parse().map_err(value_err)?;
        let noise: NoiseMode = noise.parse().map_err(value_err)?;
        let potential: PotentialKind = potential.parse().map_err(value_err)?;
        let mut problem = ProblemSpec::new(covariance.inner.clone(), noise);
        if let Some(v) = potential.build(problem.grid) {
            problem = problem.with_potential(v).map_err(value_err)?;
        }
        Ok(Self {
            inner: CoreStepper::new(kind, problem, k).map_err(value_err)?,
        })
    }

    #[getter]
    fn scheme(&self) -> &'static str {
        self.inner.kind().name()
    }

    #[getter]
    fn k(&self) -> f64 {
        self.inner.step_size()
    }

    /// Per-mode `(P_n, F_n)` with `c⁺ = P c + F e` for the explicit terms `e`.
    fn multipliers(&self, n: i64) -> PyResult<(C64, C64)> {
        self.inner
            .mode_multipliers(n)
            .ok_or_else(|| PyValueError::new_err(format!("mode {n} is outside the grid")))
    }

    /// Advances `state` by one step with noise increment `dw`.
    fn step(&self, state: &PyState, dw: Vec<C64>) -> PyResult<PyState> {
        let inc = NoiseIncrement {
            coeffs: dw,
            dt: self.inner.step_size(),
        };
        Ok(PyState {
            inner: self.inner.step(&state.inner, &inc).map_err(value_err)?,
        })
    }

    /// Applies `step` once per increment and returns the final state.
    fn run(&self, py: Python<'_>, state: &PyState, increments: Vec<Vec<C64>>) -> PyResult<PyState> {
        let k = self.inner.step_size();
        let start = state.inner.clone();
        let out = py.detach(|| {
            increments.into_iter().try_fold(start, |u, coeffs| {
                self.inner.step(&u, &NoiseIncrement { coeffs, dt: k })
            })
        });
        Ok(PyState {
            inner: out.map_err(value_err)?,
        })
    }
}

/// `E|yⁿ|²` for `i dy = a y dt + b dβ` under `scheme`, for `n = 0..n_steps`.
#[pyfunction]
#[pyo3(signature = (scheme, a, b, k, n_steps, m0 = 0.0))]
fn scalar_moments(scheme: &str, a: f64, b: f64, k: f64, n_steps: usize, m0: f64) -> PyResult<Vec<f64>> {
    let kind: SchemeKind = scheme.parse().map_err(value_err)?;
    let p = ScalarProblem::new(a, b, m0, k).map_err(value_err)?;
    moment_recursion(kind, &p, n_steps).map_err(value_err)
}

/// `m0 + b² t`.
#[pyfunction]
#[pyo3(signature = (b, t, m0 = 0.0))]
fn scalar_exact_moment(b: f64, t: f64, m0: f64) -> PyResult<f64> {
    let p = ScalarProblem::new(0.0, b, m0, 1.0).map_err(value_err)?;
    exact_second_moment(&p, t).map_err(value_err)
}

/// Least-squares `(slope, intercept, r²)` of `log(errors)` on `log(step_sizes)`.
#[pyfunction]
fn fit_slope(step_sizes: Vec<f64>, errors: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let f = core_fit_slope(&step_sizes, &errors).map_err(value_err)?;
    Ok((f.slope, f.intercept, f.r_squared))
}

fn setting_string(value: &Bound<'_, PyAny>) -> PyResult<String> {
    if value.is_instance_of::<PyBool>() {
        return Ok(if value.extract::<bool>()? { "true" } else { "false" }.to_string());
    }
    if value.is_instance_of::<PyList>() || value.is_instance_of::<PyTuple>() {
        let parts: Vec<String> = value
            .try_iter()?
            .map(|item| item.and_then(|i| i.str().map(|s| s.to_string())))
            .collect::<PyResult<_>>()?;
        return Ok(parts.join(","));
    }
    Ok(value.str()?.to_string())
}

fn run_config(command: Subcommand, preset: Option<&str>, scale: &str, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<RunConfig> {
    let mut flags = BTreeMap::new();
    if let Some(p) = preset {
        flags.insert("preset".to_string(), p.to_string());
    }
    flags.insert("scale".to_string(), scale.to_string());
    if let Some(d) = overrides {
        for (k, v) in d.iter() {
            flags.insert(k.extract::<String>()?, setting_string(&v)?);
        }
    }
    resolve(command, BTreeMap::new(), flags).map_err(value_err)
}

/// Strong errors per scheme: `{scheme: {"k", "rms_error", "std_err", "slope"}}`.
///
/// Keyword arguments override preset settings, e.g. `samples=500`.
#[pyfunction]
#[pyo3(signature = (preset = None, scale = "desk", **overrides))]
fn strong_error<'py>(
    py: Python<'py>,
    preset: Option<&str>,
    scale: &str,
    overrides: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = run_config(Subcommand::StrongError, preset, scale, overrides)?;
    let ens = cfg.ensemble().map_err(value_err)?;
    let report = py.detach(|| run_strong_error(&ens)).map_err(value_err)?;
    let out = PyDict::new(py);
    for t in &report.tables {
        let d = PyDict::new(py);
        d.set_item("k", &t.step_sizes)?;
        d.set_item("rms_error", &t.rms_errors)?;
        d.set_item("std_err", &t.std_errs)?;
        d.set_item("slope", t.fitted_slope)?;
        out.set_item(t.scheme.name(), d)?;
    }
    out.set_item("failed_samples", report.failures.total())?;
    Ok(out)
}

/// Observable traces: `{(scheme, k): {"time", "mean", "std_err", "theory"}}`.
#[pyfunction]
#[pyo3(signature = (preset = None, scale = "desk", **overrides))]
fn trace<'py>(
    py: Python<'py>,
    preset: Option<&str>,
    scale: &str,
    overrides: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = run_config(Subcommand::Trace, preset, scale, overrides)?;
    let ens = cfg.ensemble().map_err(value_err)?;
    let observable: Observable = cfg.observable;
    let report = py.detach(|| run_trace(&ens, observable)).map_err(value_err)?;
    let out = PyDict::new(py);
    for entry in &report.series {
        let d = PyDict::new(py);
        d.set_item("time", &entry.series.times)?;
        d.set_item("mean", &entry.series.values)?;
        d.set_item("std_err", &entry.series.std_errs)?;
        d.set_item("theory", &entry.series.theory)?;
        out.set_item((entry.scheme.name(), entry.step), d)?;
    }
    Ok(out)
}

#[pymodule]
pub fn ssexp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyState>()?;
    m.add_class::<PyCovariance>()?;
    m.add_class::<PyStepper>()?;
    m.add_function(wrap_pyfunction!(scalar_moments, m)?)?;
    m.add_function(wrap_pyfunction!(scalar_exact_moment, m)?)?;
    m.add_function(wrap_pyfunction!(fit_slope, m)?)?;
    m.add_function(wrap_pyfunction!(strong_error, m)?)?;
    m.add_function(wrap_pyfunction!(trace, m)?)?;
    m.add("SCHEMES", SchemeKind::ALL.iter().map(|s| s.name()).collect::<Vec<_>>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
