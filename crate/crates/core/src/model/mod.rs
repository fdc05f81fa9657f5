//! Problem abstraction: evaluator bundles, cached evaluations and a
//! finite-difference gradient checker.
//!
//! An [`MpecProblem`] describes
//!
//! ```text
//!     minimize    f(x)
//!     subject to  g(x) >= 0,  h(x) = 0,
//!                 G(x) >= 0,  H(x) >= 0,  G(x)' H(x) = 0
//! ```
//!
//! through callbacks for the maps and their Jacobians. Jacobians are stored
//! column-wise: the i-th column of `jac_g` is the gradient of the i-th
//! component of `g`, so every Jacobian is an `n x k` matrix.

mod quadratic;
mod registry;

pub use quadratic::{load_quadratic_mpec, LoadedMpec};
pub use registry::{registry_get, registry_names, SolutionInfo};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

type ScalarFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;
type VectorFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type MatrixFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// An MPEC instance given by evaluation callbacks.
///
/// Immutable after construction; evaluators must be reentrant so a problem
/// can be shared across threads.
pub struct MpecProblem {
    name: String,
    n: usize,
    m: usize,
    p: usize,
    q: usize,
    f: Box<ScalarFn>,
    grad_f: Box<VectorFn>,
    g: Box<VectorFn>,
    jac_g: Box<MatrixFn>,
    h: Box<VectorFn>,
    jac_h: Box<MatrixFn>,
    gc: Box<VectorFn>,
    jac_gc: Box<MatrixFn>,
    hc: Box<VectorFn>,
    jac_hc: Box<MatrixFn>,
    x0: Option<DVector<f64>>,
    solution: Option<SolutionInfo>,
}

impl std::fmt::Debug for MpecProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MpecProblem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("p", &self.p)
            .field("q", &self.q)
            .finish()
    }
}

impl MpecProblem {
    /// Start building a problem with `n` variables and `q` complementarity
    /// pairs.
    pub fn builder(name: impl Into<String>, n: usize, q: usize) -> MpecProblemBuilder {
        MpecProblemBuilder {
            name: name.into(),
            n,
            q,
            m: 0,
            p: 0,
            f: None,
            grad_f: None,
            g: None,
            jac_g: None,
            h: None,
            jac_h: None,
            gc: None,
            jac_gc: None,
            hc: None,
            jac_hc: None,
            x0: None,
            solution: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of variables.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of inequality constraints `g`.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of equality constraints `h`.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of complementarity pairs.
    pub fn q(&self) -> usize {
        self.q
    }

    /// Default starting point, when the problem carries one.
    pub fn x0(&self) -> Option<&DVector<f64>> {
        self.x0.as_ref()
    }

    /// Analytic solution metadata for registry fixtures.
    pub fn solution(&self) -> Option<&SolutionInfo> {
        self.solution.as_ref()
    }
}

/// Builder for [`MpecProblem`]; constraint blocks default to empty.
pub struct MpecProblemBuilder {
    name: String,
    n: usize,
    m: usize,
    p: usize,
    q: usize,
    f: Option<Box<ScalarFn>>,
    grad_f: Option<Box<VectorFn>>,
    g: Option<Box<VectorFn>>,
    jac_g: Option<Box<MatrixFn>>,
    h: Option<Box<VectorFn>>,
    jac_h: Option<Box<MatrixFn>>,
    gc: Option<Box<VectorFn>>,
    jac_gc: Option<Box<MatrixFn>>,
    hc: Option<Box<VectorFn>>,
    jac_hc: Option<Box<MatrixFn>>,
    x0: Option<DVector<f64>>,
    solution: Option<SolutionInfo>,
}

impl MpecProblemBuilder {
    pub fn objective<F, G>(mut self, f: F, grad: G) -> Self
    where
        F: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        self.f = Some(Box::new(f));
        self.grad_f = Some(Box::new(grad));
        self
    }

    pub fn inequalities<F, J>(mut self, m: usize, g: F, jac: J) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        J: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.m = m;
        self.g = Some(Box::new(g));
        self.jac_g = Some(Box::new(jac));
        self
    }

    pub fn equalities<F, J>(mut self, p: usize, h: F, jac: J) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        J: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.p = p;
        self.h = Some(Box::new(h));
        self.jac_h = Some(Box::new(jac));
        self
    }

    /// The complementarity pair `G(x) >= 0  perp  H(x) >= 0`.
    pub fn complementarity<F1, J1, F2, J2>(mut self, gc: F1, jac_gc: J1, hc: F2, jac_hc: J2) -> Self
    where
        F1: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        J1: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        F2: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        J2: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.gc = Some(Box::new(gc));
        self.jac_gc = Some(Box::new(jac_gc));
        self.hc = Some(Box::new(hc));
        self.jac_hc = Some(Box::new(jac_hc));
        self
    }

    pub fn start(mut self, x0: DVector<f64>) -> Self {
        self.x0 = Some(x0);
        self
    }

    pub fn solution(mut self, info: SolutionInfo) -> Self {
        self.solution = Some(info);
        self
    }

    pub fn build(self) -> Result<MpecProblem> {
        if self.q == 0 {
            return Err(Error::DimensionMismatch {
                field: "q".into(),
                expected: ">= 1 complementarity pair".into(),
                found: "0".into(),
            });
        }
        let f = self
            .f
            .ok_or_else(|| Error::InvalidConfig("objective missing".into()))?;
        let grad_f = self.grad_f.unwrap();
        let gc = self
            .gc
            .ok_or_else(|| Error::InvalidConfig("complementarity pair missing".into()))?;
        let (jac_gc, hc, jac_hc) = (self.jac_gc.unwrap(), self.hc.unwrap(), self.jac_hc.unwrap());

        let n = self.n;
        let g = self
            .g
            .unwrap_or_else(|| Box::new(move |_x| DVector::zeros(0)));
        let jac_g = self
            .jac_g
            .unwrap_or_else(|| Box::new(move |_x| DMatrix::zeros(n, 0)));
        let h = self
            .h
            .unwrap_or_else(|| Box::new(move |_x| DVector::zeros(0)));
        let jac_h = self
            .jac_h
            .unwrap_or_else(|| Box::new(move |_x| DMatrix::zeros(n, 0)));

        Ok(MpecProblem {
            name: self.name,
            n: self.n,
            m: self.m,
            p: self.p,
            q: self.q,
            f,
            grad_f,
            g,
            jac_g,
            h,
            jac_h,
            gc,
            jac_gc,
            hc,
            jac_hc,
            x0: self.x0,
            solution: self.solution,
        })
    }
}

/// All function and Jacobian values cached at one point, together with the
/// complementarity measure `Q = G'H` and its gradient.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub x: DVector<f64>,
    pub f: f64,
    pub grad_f: DVector<f64>,
    pub g: DVector<f64>,
    pub jac_g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub jac_h: DMatrix<f64>,
    /// Values of the complementarity function `G`.
    pub gc: DVector<f64>,
    pub jac_gc: DMatrix<f64>,
    /// Values of the complementarity function `H`.
    pub hc: DVector<f64>,
    pub jac_hc: DMatrix<f64>,
    /// Complementarity measure `Q = G'H`.
    pub q: f64,
    /// `grad Q = jac_G * H + jac_H * G`, the single code path for this value.
    pub grad_q: DVector<f64>,
}

impl Evaluation {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn m(&self) -> usize {
        self.g.len()
    }

    pub fn p(&self) -> usize {
        self.h.len()
    }

    pub fn num_pairs(&self) -> usize {
        self.gc.len()
    }
}

fn ensure_finite_scalar(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::non_finite(what))
    }
}

fn ensure_finite_vec(v: DVector<f64>, what: &str) -> Result<DVector<f64>> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(v)
    } else {
        Err(Error::non_finite(what))
    }
}

fn ensure_finite_mat(v: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(v)
    } else {
        Err(Error::non_finite(what))
    }
}

fn ensure_dims(rows: usize, cols: usize, mat: &DMatrix<f64>, what: &str) -> Result<()> {
    if mat.nrows() == rows && mat.ncols() == cols {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            field: what.into(),
            expected: format!("{rows}x{cols}"),
            found: format!("{}x{}", mat.nrows(), mat.ncols()),
        })
    }
}

/// Evaluate every function and Jacobian of `problem` at `x`.
///
/// Fails with [`Error::NonFinite`] if any callback produces NaN or infinity,
/// which callers inside a line search treat as a step rejection.
pub fn evaluate(problem: &MpecProblem, x: &DVector<f64>) -> Result<Evaluation> {
    assert_eq!(x.len(), problem.n, "point has wrong dimension");

    let f = ensure_finite_scalar((problem.f)(x), "f")?;
    let grad_f = ensure_finite_vec((problem.grad_f)(x), "grad f")?;
    let g = ensure_finite_vec((problem.g)(x), "g")?;
    let jac_g = ensure_finite_mat((problem.jac_g)(x), "jac g")?;
    let h = ensure_finite_vec((problem.h)(x), "h")?;
    let jac_h = ensure_finite_mat((problem.jac_h)(x), "jac h")?;
    let gc = ensure_finite_vec((problem.gc)(x), "G")?;
    let jac_gc = ensure_finite_mat((problem.jac_gc)(x), "jac G")?;
    let hc = ensure_finite_vec((problem.hc)(x), "H")?;
    let jac_hc = ensure_finite_mat((problem.jac_hc)(x), "jac H")?;

    let (n, m, p, q) = (problem.n, problem.m, problem.p, problem.q);
    ensure_dims(n, m, &jac_g, "jac g")?;
    ensure_dims(n, p, &jac_h, "jac h")?;
    ensure_dims(n, q, &jac_gc, "jac G")?;
    ensure_dims(n, q, &jac_hc, "jac H")?;

    let q_val = gc.dot(&hc);
    let grad_q = &jac_gc * &hc + &jac_hc * &gc;

    Ok(Evaluation {
        x: x.clone(),
        f,
        grad_f,
        g,
        jac_g,
        h,
        jac_h,
        gc,
        jac_gc,
        hc,
        jac_hc,
        q: q_val,
        grad_q,
    })
}

/// Worst-case relative errors between analytic derivatives and central
/// finite differences, one entry per function block.
#[derive(Debug, Clone)]
pub struct GradientReport {
    pub grad_f: f64,
    pub jac_g: f64,
    pub jac_h: f64,
    pub jac_gc: f64,
    pub jac_hc: f64,
    pub step: f64,
    pub tol: f64,
    pub pass: bool,
}

impl GradientReport {
    pub fn worst(&self) -> f64 {
        self.grad_f
            .max(self.jac_g)
            .max(self.jac_h)
            .max(self.jac_gc)
            .max(self.jac_hc)
    }
}

/// Compare analytic gradients against central differences with step `step`.
///
/// The relative error of an entry uses `max(1, |analytic|)` as denominator so
/// entries near zero do not blow up the ratio.
pub fn check_gradients(
    problem: &MpecProblem,
    x: &DVector<f64>,
    step: f64,
    tol: f64,
) -> Result<GradientReport> {
    assert!(step > 0.0, "finite-difference step must be positive");

    let base = evaluate(problem, x)?;
    let n = problem.n;

    let mut plus = Vec::with_capacity(n);
    let mut minus = Vec::with_capacity(n);
    for j in 0..n {
        let mut xp = x.clone();
        xp[j] += step;
        let mut xm = x.clone();
        xm[j] -= step;
        plus.push(evaluate(problem, &xp)?);
        minus.push(evaluate(problem, &xm)?);
    }

    let rel = |fd: f64, analytic: f64| (fd - analytic).abs() / analytic.abs().max(1.0);

    let mut err_f: f64 = 0.0;
    for j in 0..n {
        let fd = (plus[j].f - minus[j].f) / (2.0 * step);
        err_f = err_f.max(rel(fd, base.grad_f[j]));
    }

    let block = |get: &dyn Fn(&Evaluation) -> &DVector<f64>, jac: &DMatrix<f64>| -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..jac.ncols() {
            for j in 0..n {
                let fd = (get(&plus[j])[i] - get(&minus[j])[i]) / (2.0 * step);
                worst = worst.max(rel(fd, jac[(j, i)]));
            }
        }
        worst
    };

    let err_g = block(&|e| &e.g, &base.jac_g);
    let err_h = block(&|e| &e.h, &base.jac_h);
    let err_gc = block(&|e| &e.gc, &base.jac_gc);
    let err_hc = block(&|e| &e.hc, &base.jac_hc);

    let pass = err_f <= tol && err_g <= tol && err_h <= tol && err_gc <= tol && err_hc <= tol;
    Ok(GradientReport {
        grad_f: err_f,
        jac_g: err_g,
        jac_h: err_h,
        jac_gc: err_gc,
        jac_hc: err_hc,
        step,
        tol,
        pass,
    })
}
