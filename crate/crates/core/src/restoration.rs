//! Elastic-mode feasibility restoration.
//!
//! The elastic reformulation relaxes every constraint with nonnegative
//! slacks and minimizes their total size:
//!
//! ```text
//!     min  r'e + (v + w)'e + (y + z)'e + zeta
//!     s.t. g(x) >= -r,  h(x) = v - w,
//!          G(x) >= -y,  H(x) >= -z,  Q(x) <= zeta,
//!          r, v, w, y, z, zeta >= 0.
//! ```
//!
//! At optimal slacks the elastic objective collapses to the plain violation
//! of the constraints, so the driver minimizes the smooth surrogate
//!
//! ```text
//!     Phi(x) = ||(g)^-||^2 + ||h||^2 + ||(G)^-||^2 + ||(H)^-||^2 + Q^2
//! ```
//!
//! by Gauss-Newton steps with an Armijo backtracking line search, falling
//! back to steepest descent when Gauss-Newton fails to produce descent. A
//! step is accepted only if it also does not increase the infeasibility
//! measure `theta`, and the phase stops as soon as `theta` falls below the
//! requested target.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::measures::{infeasibility, negative_part};
use crate::model::{evaluate, Evaluation, MpecProblem};

const ARMIJO_RHO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// The elastic reformulation at a point, with slacks at their optimal
/// values. Kept for inspection and export; the restoration driver works on
/// the collapsed surrogate.
#[derive(Debug, Clone)]
pub struct ElasticProblem {
    /// Slacks of the inequality block: `g >= -r`.
    pub r: DVector<f64>,
    /// Positive and negative parts of `h = v - w`.
    pub v: DVector<f64>,
    pub w: DVector<f64>,
    /// Slacks of the complementarity pair bounds.
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    /// Bound on the complementarity measure: `Q <= zeta`.
    pub zeta: f64,
    /// Uniform weight of the elastic objective.
    pub weight: f64,
}

impl ElasticProblem {
    /// Elastic objective `r'e + (v+w)'e + (y+z)'e + zeta`, scaled by the
    /// weight; at optimal slacks this is the total l1 violation.
    pub fn objective(&self) -> f64 {
        self.weight
            * (self.r.sum() + self.v.sum() + self.w.sum() + self.y.sum() + self.z.sum() + self.zeta)
    }
}

/// Assemble the elastic problem at an evaluation, slacks initialized at
/// their optimal values.
pub fn build_elastic(eval: &Evaluation) -> ElasticProblem {
    ElasticProblem {
        r: negative_part(&eval.g),
        v: eval.h.map(|c| c.max(0.0)),
        w: eval.h.map(|c| (-c).max(0.0)),
        y: negative_part(&eval.gc),
        z: negative_part(&eval.hc),
        zeta: eval.q.max(0.0),
        weight: 1.0,
    }
}

/// Result of a restoration run.
#[derive(Debug, Clone)]
pub struct RestorationReport {
    pub x_r: DVector<f64>,
    pub theta_before: f64,
    pub theta_after: f64,
    pub inner_iterations: usize,
    /// True when `theta_after <= target`.
    pub converged: bool,
    /// Surrogate value after every accepted step; nonincreasing.
    pub phi_trace: Vec<f64>,
    /// Infeasibility after every accepted step; nonincreasing.
    pub theta_trace: Vec<f64>,
}

/// Residual vector of the surrogate and its Jacobian rows.
///
/// Inactive hinge components contribute zero residual and zero row, so the
/// dimensions stay fixed across iterations.
fn residuals(eval: &Evaluation) -> (DVector<f64>, DMatrix<f64>) {
    let n = eval.n();
    let (m, p, q) = (eval.m(), eval.p(), eval.num_pairs());
    let rows = m + p + 2 * q + 1;
    let mut r = DVector::zeros(rows);
    let mut jac = DMatrix::zeros(rows, n);

    for i in 0..m {
        if eval.g[i] < 0.0 {
            r[i] = -eval.g[i];
            jac.row_mut(i).copy_from(&-eval.jac_g.column(i).transpose());
        }
    }
    for i in 0..p {
        r[m + i] = eval.h[i];
        jac.row_mut(m + i).copy_from(&eval.jac_h.column(i).transpose());
    }
    for i in 0..q {
        if eval.gc[i] < 0.0 {
            r[m + p + i] = -eval.gc[i];
            jac.row_mut(m + p + i)
                .copy_from(&-eval.jac_gc.column(i).transpose());
        }
        if eval.hc[i] < 0.0 {
            r[m + p + q + i] = -eval.hc[i];
            jac.row_mut(m + p + q + i)
                .copy_from(&-eval.jac_hc.column(i).transpose());
        }
    }
    r[rows - 1] = eval.q;
    jac.row_mut(rows - 1).copy_from(&eval.grad_q.transpose());

    (r, jac)
}

fn phi_of(eval: &Evaluation) -> f64 {
    let (r, _) = residuals(eval);
    r.norm_squared()
}

/// Drive the iterate toward feasibility until `theta <= target`.
pub fn restore(
    problem: &MpecProblem,
    x: &DVector<f64>,
    target: f64,
    max_inner: usize,
) -> Result<RestorationReport> {
    assert!(target > 0.0, "restoration target must be positive");

    let mut eval = evaluate(problem, x)?;
    let theta_before = infeasibility(&eval).theta;
    let mut theta = theta_before;
    let mut phi_trace = vec![phi_of(&eval)];
    let mut theta_trace = vec![theta];

    if theta <= target {
        return Ok(RestorationReport {
            x_r: x.clone(),
            theta_before,
            theta_after: theta,
            inner_iterations: 0,
            converged: true,
            phi_trace,
            theta_trace,
        });
    }

    let mut xk = x.clone();
    for iter in 1..=max_inner {
        let (r, jac) = residuals(&eval);
        let phi = r.norm_squared();
        let grad = jac.transpose() * &r * 2.0;

        // Gauss-Newton direction: least-squares solution of jac * d = -r.
        let mut d = jac
            .clone()
            .svd(true, true)
            .solve(&(-&r), 1e-13)
            .unwrap_or_else(|_| -grad.clone());
        let mut slope = grad.dot(&d);
        if !d.iter().all(|v| v.is_finite()) || slope >= 0.0 {
            d = -grad.clone();
            slope = grad.dot(&d);
        }
        if slope >= -1e-300 {
            // Stationary point of the surrogate with theta above target.
            return Ok(RestorationReport {
                x_r: xk,
                theta_before,
                theta_after: theta,
                inner_iterations: iter,
                converged: false,
                phi_trace,
                theta_trace,
            });
        }

        let mut alpha = 1.0_f64;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &xk + &d * alpha;
            match evaluate(problem, &trial) {
                Ok(te) => {
                    let t_theta = infeasibility(&te).theta;
                    if phi_of(&te) <= phi + ARMIJO_RHO * alpha * slope && t_theta <= theta {
                        xk = trial;
                        eval = te;
                        theta = t_theta;
                        accepted = true;
                        break;
                    }
                }
                Err(_) => {} // non-finite trial point: reject this alpha
            }
            alpha *= 0.5;
        }

        if !accepted {
            return Ok(RestorationReport {
                x_r: xk,
                theta_before,
                theta_after: theta,
                inner_iterations: iter,
                converged: false,
                phi_trace,
                theta_trace,
            });
        }

        phi_trace.push(phi_of(&eval));
        theta_trace.push(theta);
        if theta <= target {
            return Ok(RestorationReport {
                x_r: xk,
                theta_before,
                theta_after: theta,
                inner_iterations: iter,
                converged: true,
                phi_trace,
                theta_trace,
            });
        }
    }

    Ok(RestorationReport {
        x_r: xk,
        theta_before,
        theta_after: theta,
        inner_iterations: max_inner,
        converged: false,
        phi_trace,
        theta_trace,
    })
}
