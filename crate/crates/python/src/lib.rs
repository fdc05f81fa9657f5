//! Python bindings: problems, solves and point diagnostics.
//!
//! Usage from Python:
//!
//! ```python
//! import mpec_funnel_py as mf
//!
//! prob = mf.MpecProblem.from_registry("lin_biactive")
//! result = prob.solve([1.0, 1.0])
//! assert result.status == "s_stationary_point"
//! ```

use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use nalgebra::DVector;

use mpec_funnel::error::Error;
use mpec_funnel::funnel::{solve, SolveResult, SolverConfig};
use mpec_funnel::measures::infeasibility;
use mpec_funnel::model::{
    check_gradients, evaluate, load_quadratic_mpec, registry_get, registry_names, MpecProblem,
};
use mpec_funnel::stationarity::{
    classify, estimate_multipliers, mfcq_diagnostic, ClassifyOptions,
};

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn point_of(problem: &MpecProblem, x: &[f64]) -> PyResult<DVector<f64>> {
    if x.len() != problem.n() {
        return Err(PyValueError::new_err(format!(
            "point has length {}, problem has {} variables",
            x.len(),
            problem.n()
        )));
    }
    Ok(DVector::from_vec(x.to_vec()))
}

/// An MPEC instance (registry fixture or loaded quadratic document).
#[pyclass(name = "MpecProblem")]
struct PyMpecProblem {
    inner: Arc<MpecProblem>,
}

#[pymethods]
impl PyMpecProblem {
    /// Load a built-in problem by name; see `registry_names()`.
    #[staticmethod]
    fn from_registry(name: &str) -> PyResult<Self> {
        Ok(PyMpecProblem {
            inner: Arc::new(registry_get(name).map_err(err)?),
        })
    }

    /// Parse a quadratic-MPEC JSON document.
    #[staticmethod]
    fn from_document(text: &str) -> PyResult<Self> {
        Ok(PyMpecProblem {
            inner: Arc::new(load_quadratic_mpec(text).map_err(err)?.problem),
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    #[getter]
    fn q(&self) -> usize {
        self.inner.q()
    }

    /// Default starting point, when the problem carries one.
    fn default_start(&self) -> Option<Vec<f64>> {
        self.inner.x0().map(vec_of)
    }

    /// Evaluate all functions at `x`; returns a dict with values and the
    /// infeasibility breakdown.
    fn evaluate<'py>(&self, py: Python<'py>, x: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let xv = point_of(&self.inner, &x)?;
        let e = evaluate(&self.inner, &xv).map_err(err)?;
        let theta = infeasibility(&e);
        let d = PyDict::new(py);
        d.set_item("f", e.f)?;
        d.set_item("grad_f", vec_of(&e.grad_f))?;
        d.set_item("g", vec_of(&e.g))?;
        d.set_item("h", vec_of(&e.h))?;
        d.set_item("G", vec_of(&e.gc))?;
        d.set_item("H", vec_of(&e.hc))?;
        d.set_item("Q", e.q)?;
        d.set_item("grad_Q", vec_of(&e.grad_q))?;
        d.set_item("theta_f", theta.theta_f)?;
        d.set_item("theta_c", theta.theta_c)?;
        d.set_item("theta", theta.theta)?;
        Ok(d)
    }

    /// Compare analytic gradients against central finite differences.
    #[pyo3(signature = (x, step=1e-6, tol=1e-6))]
    fn check_gradients<'py>(
        &self,
        py: Python<'py>,
        x: Vec<f64>,
        step: f64,
        tol: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let xv = point_of(&self.inner, &x)?;
        let r = check_gradients(&self.inner, &xv, step, tol).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("grad_f", r.grad_f)?;
        d.set_item("jac_g", r.jac_g)?;
        d.set_item("jac_h", r.jac_h)?;
        d.set_item("jac_G", r.jac_gc)?;
        d.set_item("jac_H", r.jac_hc)?;
        d.set_item("worst", r.worst())?;
        d.set_item("step", r.step)?;
        d.set_item("tol", r.tol)?;
        d.set_item("pass", r.pass)?;
        Ok(d)
    }

    /// Run the solver. `config_json` mirrors the CLI config file format.
    #[pyo3(signature = (x0=None, config_json=None))]
    fn solve(&self, x0: Option<Vec<f64>>, config_json: Option<&str>) -> PyResult<PySolveResult> {
        let cfg: SolverConfig = match config_json {
            None => SolverConfig::default(),
            Some(text) => serde_json::from_str(text)
                .map_err(|e| PyValueError::new_err(format!("bad config: {e}")))?,
        };
        cfg.validate().map_err(err)?;
        let start = match x0 {
            Some(v) => point_of(&self.inner, &v)?,
            None => self
                .inner
                .x0()
                .cloned()
                .unwrap_or_else(|| DVector::zeros(self.inner.n())),
        };
        let result = solve(&self.inner, &start, &cfg).map_err(err)?;
        Ok(PySolveResult { inner: result })
    }

    /// Classify a point: multipliers are estimated from the active
    /// constraints, then the stationarity class and the MFCQ diagnostic
    /// are reported.
    fn check_point<'py>(&self, py: Python<'py>, x: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let xv = point_of(&self.inner, &x)?;
        let e = evaluate(&self.inner, &xv).map_err(err)?;
        let opts = ClassifyOptions::default();
        let mult = estimate_multipliers(&e, &opts).map_err(err)?;
        let report = classify(&e, &mult, &opts);
        let mfcq = mfcq_diagnostic(&e, opts.activity_tol).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("class", report.class.to_string())?;
        d.set_item("stationarity_residual", report.kkt_residual)?;
        d.set_item("biactive", report.biactive.clone())?;
        d.set_item("nu_hat", vec_of(&mult.nu_hat))?;
        d.set_item("xi_hat", vec_of(&mult.xi_hat))?;
        d.set_item("mfcq_holds", mfcq.holds)?;
        d.set_item("mfcq_margin", mfcq.margin)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "MpecProblem(name={:?}, n={}, m={}, p={}, q={})",
            self.inner.name(),
            self.inner.n(),
            self.inner.m(),
            self.inner.p(),
            self.inner.q()
        )
    }
}

/// Outcome of a solve.
#[pyclass(name = "SolveResult")]
struct PySolveResult {
    inner: SolveResult,
}

#[pymethods]
impl PySolveResult {
    #[getter]
    fn status(&self) -> String {
        self.inner.status.to_string()
    }

    #[getter]
    fn x(&self) -> Vec<f64> {
        vec_of(&self.inner.x)
    }

    #[getter]
    fn f(&self) -> f64 {
        self.inner.f
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    /// Stationarity class of the final point, when certified.
    #[getter]
    fn stationarity_class(&self) -> Option<String> {
        self.inner.stationarity.as_ref().map(|s| s.class.to_string())
    }

    #[getter]
    fn multipliers<'py>(&self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyDict>>> {
        match &self.inner.multipliers {
            None => Ok(None),
            Some(m) => {
                let d = PyDict::new(py);
                d.set_item("lambda", vec_of(&m.lambda))?;
                d.set_item("mu", vec_of(&m.mu))?;
                d.set_item("nu_hat", vec_of(&m.nu_hat))?;
                d.set_item("xi_hat", vec_of(&m.xi_hat))?;
                d.set_item("eta", m.eta)?;
                Ok(Some(d))
            }
        }
    }

    /// Iteration trace as a list of dicts, one per outer iteration.
    fn trace<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner
            .trace
            .iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("k", r.k)?;
                d.set_item("kind", r.kind.to_string())?;
                d.set_item("theta_f", r.theta_f)?;
                d.set_item("theta_c", r.theta_c)?;
                d.set_item("theta", r.theta)?;
                d.set_item("theta_max", r.theta_max)?;
                d.set_item("f", r.f)?;
                d.set_item("alpha", r.alpha)?;
                d.set_item("u", r.u)?;
                d.set_item("norm_s", r.norm_s)?;
                d.set_item("norm_t", r.norm_t)?;
                d.set_item("gamma", r.gamma)?;
                d.set_item("qp_iters", r.qp_iters)?;
                d.set_item("stat_res", r.stat_res)?;
                Ok(d)
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "SolveResult(status={:?}, f={:.6e}, iterations={})",
            self.inner.status.to_string(),
            self.inner.f,
            self.inner.iterations
        )
    }
}

/// Names of the built-in problems.
#[pyfunction]
fn registry(py: Python<'_>) -> Vec<Bound<'_, pyo3::types::PyString>> {
    registry_names()
        .into_iter()
        .map(|s| pyo3::types::PyString::new(py, s))
        .collect()
}

#[pymodule]
fn mpec_funnel_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMpecProblem>()?;
    m.add_class::<PySolveResult>()?;
    m.add_function(wrap_pyfunction!(registry, m)?)?;
    Ok(())
}
