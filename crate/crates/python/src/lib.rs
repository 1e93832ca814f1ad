//! Python bindings: spectra, cycle parameters, rates, tuning and runs.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use cyclic_momentum as cm;

fn to_py(e: cm::Error) -> PyErr {
    if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

/// Union of disjoint closed intervals of positive reals.
#[pyclass(name = "SpectrumSet", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySpectrumSet {
    inner: cm::SpectrumSet,
}

#[pymethods]
impl PySpectrumSet {
    #[new]
    fn new(intervals: Vec<(f64, f64)>) -> PyResult<Self> {
        Ok(Self {
            inner: cm::SpectrumSet::new(intervals).map_err(to_py)?,
        })
    }

    /// Two-interval support fitted to a list of eigenvalues.
    #[staticmethod]
    fn fit(eigs: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: cm::two_interval_fit(&eigs).map_err(to_py)?,
        })
    }

    #[getter]
    fn intervals(&self) -> Vec<(f64, f64)> {
        self.inner.intervals().to_vec()
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu()
    }

    #[getter(L)]
    fn l(&self) -> f64 {
        self.inner.l()
    }

    /// `(mu, L, kappa, rho, R, (L1, mu2))`.
    fn gap_params(&self) -> PyResult<(f64, f64, f64, f64, f64, (f64, f64))> {
        let g = cm::gap_params(&self.inner).map_err(to_py)?;
        Ok((g.mu, g.l, g.kappa, g.rho, g.r, g.inner))
    }

    fn __repr__(&self) -> String {
        format!("SpectrumSet({})", self.inner)
    }
}

/// Step-size cycle and momentum of a cyclical heavy ball method.
#[pyclass(name = "CycleParams", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyCycleParams {
    inner: cm::CycleParams,
}

#[pymethods]
impl PyCycleParams {
    #[new]
    fn new(h: Vec<f64>, m: f64) -> PyResult<Self> {
        Ok(Self {
            inner: cm::CycleParams::new(h, m).map_err(to_py)?,
        })
    }

    #[getter]
    fn h(&self) -> Vec<f64> {
        self.inner.h.clone()
    }

    #[getter]
    fn m(&self) -> f64 {
        self.inner.m
    }

    #[getter(K)]
    fn k(&self) -> usize {
        self.inner.k()
    }

    fn __repr__(&self) -> String {
        format!("CycleParams(h={:?}, m={})", self.inner.h, self.inner.m)
    }
}

/// Result of a worst-case rate computation.
#[pyclass(name = "RateReport", frozen, get_all, skip_from_py_object)]
struct PyRateReport {
    sigma_star: f64,
    regime: String,
    rate_factor: f64,
    witness_lambda: f64,
}

#[pymethods]
impl PyRateReport {
    fn __repr__(&self) -> String {
        format!(
            "RateReport(sigma_star={}, regime={}, rate_factor={}, witness_lambda={})",
            self.sigma_star, self.regime, self.rate_factor, self.witness_lambda
        )
    }
}

#[pyfunction]
fn cheb_t(n: u32, x: f64) -> f64 {
    cm::cheb_t(n, x)
}

#[pyfunction]
fn sigma_cycle(params: &PyCycleParams, lam: f64) -> PyResult<f64> {
    cm::sigma_cycle(&params.inner, lam).map_err(to_py)
}

#[pyfunction]
fn rate_report(params: &PyCycleParams, spectrum: &PySpectrumSet) -> PyResult<PyRateReport> {
    let r = cm::rate_report(&params.inner, &spectrum.inner).map_err(to_py)?;
    Ok(PyRateReport {
        sigma_star: r.sigma_star,
        regime: r.regime.to_string(),
        rate_factor: r.rate_factor,
        witness_lambda: r.witness_lambda,
    })
}

#[pyfunction]
fn tune_phb(mu: f64, l: f64) -> PyResult<PyCycleParams> {
    Ok(PyCycleParams {
        inner: cm::tune_phb(mu, l).map_err(to_py)?,
    })
}

#[pyfunction]
fn tune_k2(spectrum: &PySpectrumSet) -> PyResult<PyCycleParams> {
    Ok(PyCycleParams {
        inner: cm::tune_k2(&spectrum.inner).map_err(to_py)?,
    })
}

/// Optimal K-cycle through the minimax link polynomial; `(params, rate)`.
#[pyfunction]
#[pyo3(signature = (spectrum, k, lp_points = 2000))]
fn tune_general(py: Python<'_>, spectrum: &PySpectrumSet, k: usize, lp_points: usize) -> PyResult<(PyCycleParams, f64)> {
    let spec = spectrum.inner.clone();
    let g = py
        .detach(move || cm::tune_general(&spec, k, lp_points))
        .map_err(to_py)?;
    Ok((PyCycleParams { inner: g.params }, g.report.rate_factor))
}

/// Ascending coefficients of the minimax link polynomial of degree `k`.
#[pyfunction]
#[pyo3(signature = (spectrum, k, lp_points = 2000))]
fn solve_sigma_lp(spectrum: &PySpectrumSet, k: usize, lp_points: usize) -> PyResult<Vec<f64>> {
    let p = cm::solve_sigma_lp(&spectrum.inner, k, lp_points).map_err(to_py)?;
    Ok(p.coeffs().to_vec())
}

#[pyfunction]
#[pyo3(signature = (coeffs, spectrum, tol = 1e-6))]
fn check_equioscillation(coeffs: Vec<f64>, spectrum: &PySpectrumSet, tol: f64) -> bool {
    cm::check_equioscillation(&cm::Poly::new(coeffs), &spectrum.inner, tol).ok
}

/// `(rate, r_t)` for the optimal two-step method; `r_t` only when `t` is given.
#[pyfunction]
#[pyo3(signature = (spectrum, t = None))]
fn optimal_rate_k2(spectrum: &PySpectrumSet, t: Option<u32>) -> PyResult<(f64, Option<f64>)> {
    let gp = cm::gap_params(&spectrum.inner).map_err(to_py)?;
    cm::optimal_rate_k2(&gp, t).map_err(to_py)
}

/// Distances `‖x_t − x*‖` of a heavy ball run on a diagonal quadratic.
#[pyfunction]
#[pyo3(signature = (eigs, params, t_max, seed = 0))]
fn run_hbk_diag(eigs: Vec<f64>, params: &PyCycleParams, t_max: usize, seed: u64) -> PyResult<Vec<f64>> {
    let obj = cm::problems::make_diag_quadratic(&eigs, seed).map_err(to_py)?;
    let x0 = cm::bench::random_unit_offset(obj.x_star().expect("quadratic"), seed);
    let tr = cm::run_hbk(&obj, &params.inner, &x0, t_max).map_err(to_py)?;
    Ok(tr.values())
}

/// Geometric-mean contraction of `values` after `burn_in`.
#[pyfunction]
fn empirical_rate(values: Vec<f64>, burn_in: usize) -> PyResult<f64> {
    cm::empirical_rate(&cm::solvers::trace_from_values(&values, "python"), burn_in).map_err(to_py)
}

#[pymodule(name = "cyclic_momentum")]
fn cyclic_momentum_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpectrumSet>()?;
    m.add_class::<PyCycleParams>()?;
    m.add_class::<PyRateReport>()?;
    m.add_function(wrap_pyfunction!(cheb_t, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_cycle, m)?)?;
    m.add_function(wrap_pyfunction!(rate_report, m)?)?;
    m.add_function(wrap_pyfunction!(tune_phb, m)?)?;
    m.add_function(wrap_pyfunction!(tune_k2, m)?)?;
    m.add_function(wrap_pyfunction!(tune_general, m)?)?;
    m.add_function(wrap_pyfunction!(solve_sigma_lp, m)?)?;
    m.add_function(wrap_pyfunction!(check_equioscillation, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_rate_k2, m)?)?;
    m.add_function(wrap_pyfunction!(run_hbk_diag, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_rate, m)?)?;
    Ok(())
}
