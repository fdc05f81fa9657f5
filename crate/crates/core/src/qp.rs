//! Dense convex quadratic programming by a primal active-set method.
//!
//! Solves
//!
//! ```text
//!     minimize    t' H t / 2 + c' t
//!     subject to  A_eq t  = b_eq
//!                 A_in t >= b_in
//! ```
//!
//! with `H` symmetric positive definite. A phase-1 start is computed by
//! eliminating the equalities through a least-norm solution plus null-space
//! basis and then driving the squared hinge violation of the inequalities to
//! zero with Gauss-Newton steps; a positive stationary value of that convex
//! function certifies infeasibility.
//!
//! The subproblems solved here are small and dense, and the same constraint
//! set is re-solved for a sequence of penalty weights, so the solver accepts
//! a warm-start point and keeps iterations deterministic: blocking-constraint
//! ties break toward the lowest index, and a Bland-style lowest-index rule
//! kicks in after `3 (m' + p')` iterations without progress.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Errors of the QP layer.
#[derive(Debug, Error)]
pub enum QpError {
    /// Phase 1 certified that no feasible point exists.
    #[error("constraints are infeasible (minimum total violation {violation:.3e})")]
    Infeasible { violation: f64 },
    /// Iteration limit hit.
    #[error("active-set iteration limit reached")]
    MaxIterations,
    /// A factorization failed.
    #[error("numerical breakdown in QP solve: {0}")]
    NumericalBreakdown(String),
}

/// A dense strictly convex QP.
#[derive(Debug, Clone)]
pub struct QpProblem {
    /// Symmetric positive-definite quadratic term.
    pub hess: DMatrix<f64>,
    /// Linear term.
    pub c: DVector<f64>,
    /// Equality rows: `a_eq t = b_eq`.
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    /// Inequality rows: `a_in t >= b_in`.
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
}

impl QpProblem {
    /// Unconstrained problem.
    pub fn unconstrained(hess: DMatrix<f64>, c: DVector<f64>) -> Self {
        let n = c.len();
        QpProblem {
            hess,
            c,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_in: DMatrix::zeros(0, n),
            b_in: DVector::zeros(0),
        }
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    /// Objective value at `t`.
    pub fn objective(&self, t: &DVector<f64>) -> f64 {
        0.5 * (t.transpose() * &self.hess * t)[(0, 0)] + self.c.dot(t)
    }
}

/// Primal-dual solution of a QP.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub t: DVector<f64>,
    /// Multipliers of the equality rows.
    pub lam_eq: DVector<f64>,
    /// Multipliers of the inequality rows, nonnegative at the solution.
    pub lam_in: DVector<f64>,
    /// Indices of binding inequalities (final working set).
    pub active: Vec<usize>,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Objective after every active-set iteration; nonincreasing.
    pub objective_trace: Vec<f64>,
}

const FEAS_TOL: f64 = 1e-9;
const PHASE1_DONE_TOL: f64 = 1e-12;
const INFEASIBLE_TOL: f64 = 1e-8;
const STEP_TOL: f64 = 1e-12;
const DUAL_TOL: f64 = 1e-11;

fn scale_of(v: &DVector<f64>) -> f64 {
    if v.is_empty() {
        1.0
    } else {
        v.amax().max(1.0)
    }
}

/// Greedily pick a maximal subset of rows that stays linearly independent,
/// preferring lower indices. Returns kept indices and an orthonormal basis
/// of their span.
fn independent_rows(a: &DMatrix<f64>, rows: &[usize], basis: &mut Vec<DVector<f64>>) -> Vec<usize> {
    let mut kept = Vec::new();
    for &i in rows {
        let row = a.row(i).transpose();
        if basis_accepts(basis, &row) {
            kept.push(i);
        }
    }
    kept
}

/// Modified Gram-Schmidt test: extends `basis` and returns true when `v`
/// adds a new direction.
fn basis_accepts(basis: &mut Vec<DVector<f64>>, v: &DVector<f64>) -> bool {
    let scale = v.norm().max(1.0);
    let mut r = v.clone();
    for b in basis.iter() {
        let proj = b.dot(&r);
        r -= b * proj;
    }
    // second pass for numerical safety
    for b in basis.iter() {
        let proj = b.dot(&r);
        r -= b * proj;
    }
    let norm = r.norm();
    if norm > 1e-10 * scale {
        basis.push(r / norm);
        true
    } else {
        false
    }
}

/// Orthonormal basis of the null space of `a` via the spectral decomposition
/// of `a' a`.
fn null_space_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let ata = a.transpose() * a;
    let eig = ata.symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cutoff = 1e-20_f64.max(1e-14 * max_ev.max(1.0));
    let cols: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] <= cutoff).collect();
    let mut z = DMatrix::zeros(n, cols.len());
    for (j, &i) in cols.iter().enumerate() {
        z.set_column(j, &eig.eigenvectors.column(i));
    }
    z
}

/// Find a point satisfying the constraints, or certify infeasibility.
///
/// Equalities are satisfied through a least-norm particular solution; the
/// remaining inequality violation is minimized as a squared hinge with
/// Gauss-Newton steps and an Armijo backtracking line search, falling back
/// to steepest descent when the Gauss-Newton direction is not a descent
/// direction.
pub fn phase1(
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
    a_in: &DMatrix<f64>,
    b_in: &DVector<f64>,
) -> Result<DVector<f64>, QpError> {
    let n = a_eq.ncols().max(a_in.ncols());
    let b_scale = scale_of(b_in).max(scale_of(b_eq));

    // Particular solution of the equality system.
    let t0 = if a_eq.nrows() > 0 {
        let svd = a_eq.clone().svd(true, true);
        let sol = svd
            .solve(b_eq, 1e-13)
            .map_err(|e| QpError::NumericalBreakdown(e.to_string()))?;
        let resid = (a_eq * &sol - b_eq).amax();
        if resid > INFEASIBLE_TOL * scale_of(b_eq) {
            return Err(QpError::Infeasible { violation: resid });
        }
        sol
    } else {
        DVector::zeros(n)
    };

    if a_in.nrows() == 0 {
        return Ok(t0);
    }

    let z = if a_eq.nrows() > 0 {
        null_space_basis(a_eq)
    } else {
        DMatrix::identity(n, n)
    };

    let residual_at = |t: &DVector<f64>| -> DVector<f64> { b_in - a_in * t };
    let total_violation =
        |r: &DVector<f64>| -> f64 { r.iter().map(|&v| v.max(0.0)).sum::<f64>() };
    let phi = |r: &DVector<f64>| -> f64 {
        0.5 * r.iter().map(|&v| v.max(0.0).powi(2)).sum::<f64>()
    };

    let mut t = t0.clone();
    let mut r = residual_at(&t);
    if z.ncols() == 0 {
        // Equalities pin the point entirely.
        return if total_violation(&r) <= INFEASIBLE_TOL * b_scale {
            Ok(t)
        } else {
            Err(QpError::Infeasible {
                violation: total_violation(&r),
            })
        };
    }
    let a_red = a_in * &z; // inequalities in null-space coordinates

    for _ in 0..400 {
        let viol: Vec<usize> = (0..r.len()).filter(|&i| r[i] > 0.0).collect();
        if viol.is_empty() || r.iter().cloned().fold(f64::MIN, f64::max) <= PHASE1_DONE_TOL * b_scale
        {
            return Ok(t);
        }

        let mut av = DMatrix::zeros(viol.len(), a_red.ncols());
        let mut rv = DVector::zeros(viol.len());
        for (k, &i) in viol.iter().enumerate() {
            av.set_row(k, &a_red.row(i));
            rv[k] = r[i];
        }

        // grad of phi in reduced coordinates
        let grad = -(av.transpose() * &rv);
        if grad.norm() <= 1e-13 * b_scale.max(1.0) {
            let v = total_violation(&r);
            return if v <= INFEASIBLE_TOL * b_scale {
                Ok(t)
            } else {
                Err(QpError::Infeasible { violation: v })
            };
        }

        // Gauss-Newton: least-squares solution of av * d = rv.
        let mut d = av
            .clone()
            .svd(true, true)
            .solve(&rv, 1e-13)
            .unwrap_or_else(|_| -grad.clone());
        let mut slope = grad.dot(&d);
        if !d.iter().all(|v| v.is_finite()) || slope >= 0.0 {
            d = -grad.clone();
            slope = grad.dot(&d);
        }

        let phi0 = phi(&r);
        let mut alpha = 1.0_f64;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &t + &z * (&d * alpha);
            let rt = residual_at(&trial);
            if phi(&rt) <= phi0 + 1e-4 * alpha * slope {
                t = trial;
                r = rt;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            let v = total_violation(&r);
            return if v <= INFEASIBLE_TOL * b_scale {
                Ok(t)
            } else {
                Err(QpError::Infeasible { violation: v })
            };
        }
    }
    Err(QpError::MaxIterations)
}

fn is_feasible(qp: &QpProblem, t: &DVector<f64>) -> bool {
    let eq_ok = qp.a_eq.nrows() == 0
        || (&qp.a_eq * t - &qp.b_eq).amax() <= FEAS_TOL * scale_of(&qp.b_eq);
    if !eq_ok {
        return false;
    }
    if qp.a_in.nrows() == 0 {
        return true;
    }
    let slack = &qp.a_in * t - &qp.b_in;
    slack.min() >= -FEAS_TOL * scale_of(&qp.b_in)
}

/// Solve a KKT system for the working set `(eq_rows, w)`; right-hand side
/// corrects any drift off the working constraints.
#[allow(clippy::too_many_arguments)]
fn kkt_solve(
    hess: &DMatrix<f64>,
    c: &DVector<f64>,
    qp: &QpProblem,
    eq_rows: &[usize],
    w: &[usize],
    t: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), QpError> {
    let n = c.len();
    let k = eq_rows.len() + w.len();
    let dim = n + k;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(hess);
    let mut rhs = DVector::zeros(dim);
    let grad = hess * t + c;
    for i in 0..n {
        rhs[i] = -grad[i];
    }
    for (r, &row) in eq_rows.iter().chain(w.iter()).enumerate() {
        let (a_row, b_val) = if r < eq_rows.len() {
            (qp.a_eq.row(row), qp.b_eq[row])
        } else {
            (qp.a_in.row(row), qp.b_in[row])
        };
        for j in 0..n {
            kkt[(n + r, j)] = a_row[j];
            kkt[(j, n + r)] = a_row[j];
        }
        rhs[n + r] = b_val - a_row.transpose().dot(t);
    }

    let sol = kkt
        .clone()
        .lu()
        .solve(&rhs)
        .or_else(|| kkt.full_piv_lu().solve(&rhs))
        .ok_or_else(|| QpError::NumericalBreakdown("singular KKT system".into()))?;
    let p = DVector::from_iterator(n, (0..n).map(|i| sol[i]));
    // The symmetric form solves H p + A' nu = -grad; our multiplier
    // convention H t + c = A' lam means lam = -nu.
    let lam = DVector::from_iterator(k, (0..k).map(|i| -sol[n + i]));
    Ok((p, lam))
}

/// Solve a strictly convex QP, optionally warm-started at a feasible point.
pub fn solve_qp(qp: &QpProblem, start: Option<&DVector<f64>>) -> Result<QpSolution, QpError> {
    let n = qp.n();
    assert_eq!(qp.hess.nrows(), n);
    assert_eq!(qp.hess.ncols(), n);
    assert_eq!(qp.a_eq.nrows(), qp.b_eq.len());
    assert_eq!(qp.a_in.nrows(), qp.b_in.len());

    let hess = (&qp.hess + qp.hess.transpose()) * 0.5;
    let m_in = qp.a_in.nrows();
    let p_eq = qp.a_eq.nrows();

    let mut t = match start {
        Some(t0) if is_feasible(qp, t0) => t0.clone(),
        _ => phase1(&qp.a_eq, &qp.b_eq, &qp.a_in, &qp.b_in)?,
    };

    // Working set: independent equality rows plus an independent subset of
    // active inequalities at the start point.
    let mut basis = Vec::new();
    let all_eq: Vec<usize> = (0..p_eq).collect();
    let eq_rows = independent_rows(&qp.a_eq, &all_eq, &mut basis);

    let b_in_scale = scale_of(&qp.b_in);
    let active_now: Vec<usize> = (0..m_in)
        .filter(|&i| {
            (qp.a_in.row(i) * &t)[(0, 0)] - qp.b_in[i] <= 1e-9 * b_in_scale
        })
        .collect();
    let mut w = independent_rows(&qp.a_in, &active_now, &mut basis);

    let max_iter = 100 + 20 * (n + m_in + p_eq);
    let stall_limit = 3 * (m_in + p_eq) + 3;
    let mut stall = 0usize;
    let mut bland = false;
    let mut best_obj = qp.objective(&t);
    let mut objective_trace = vec![best_obj];
    let dual_tol = DUAL_TOL * scale_of(&qp.c);

    for iter in 0..max_iter {
        let (p, lam) = kkt_solve(&hess, &qp.c, qp, &eq_rows, &w, &t)?;

        if p.amax() <= STEP_TOL * t.amax().max(1.0) {
            // On the working-set face; inspect inequality multipliers.
            let lam_w = lam.rows(eq_rows.len(), w.len()).clone_owned();
            let leaving = if bland {
                w.iter()
                    .enumerate()
                    .find(|&(k, _)| lam_w[k] < -dual_tol)
                    .map(|(k, _)| k)
            } else {
                let mut worst: Option<(usize, f64)> = None;
                for k in 0..w.len() {
                    if lam_w[k] < -dual_tol && worst.map_or(true, |(_, v)| lam_w[k] < v) {
                        worst = Some((k, lam_w[k]));
                    }
                }
                worst.map(|(k, _)| k)
            };
            match leaving {
                None => {
                    // Optimal: map multipliers back to the full rows.
                    let mut lam_eq = DVector::zeros(p_eq);
                    for (k, &row) in eq_rows.iter().enumerate() {
                        lam_eq[row] = lam[k];
                    }
                    let mut lam_in = DVector::zeros(m_in);
                    for (k, &row) in w.iter().enumerate() {
                        lam_in[row] = lam[eq_rows.len() + k];
                    }
                    let mut active = w.clone();
                    active.sort_unstable();
                    let mut sol = QpSolution {
                        t,
                        lam_eq,
                        lam_in,
                        active,
                        kkt_residual: 0.0,
                        iterations: iter + 1,
                        objective_trace,
                    };
                    sol.kkt_residual = kkt_residual(qp, &sol);
                    return Ok(sol);
                }
                Some(k) => {
                    w.remove(k);
                    rebuild_basis(qp, &eq_rows, &w, &mut basis);
                }
            }
        } else {
            // Step toward the face minimizer, stopping at the first
            // blocking constraint (lowest index on ties).
            let mut alpha = 1.0_f64;
            let mut blocking = None;
            for i in 0..m_in {
                if w.contains(&i) {
                    continue;
                }
                let aip = (qp.a_in.row(i) * &p)[(0, 0)];
                if aip < -1e-13 {
                    let slack = (qp.a_in.row(i) * &t)[(0, 0)] - qp.b_in[i];
                    let ai = (slack / -aip).max(0.0);
                    if ai < alpha - 1e-14 {
                        alpha = ai;
                        blocking = Some(i);
                    }
                }
            }
            t += &p * alpha;
            if let Some(i) = blocking {
                if basis_accepts(&mut basis, &qp.a_in.row(i).transpose()) {
                    w.push(i);
                }
            }
        }

        let obj = qp.objective(&t);
        objective_trace.push(obj);
        if obj < best_obj - 1e-14 * best_obj.abs().max(1.0) {
            best_obj = obj;
            stall = 0;
        } else {
            stall += 1;
            if stall > stall_limit {
                bland = true;
            }
        }
    }
    Err(QpError::MaxIterations)
}

fn rebuild_basis(
    qp: &QpProblem,
    eq_rows: &[usize],
    w: &[usize],
    basis: &mut Vec<DVector<f64>>,
) {
    basis.clear();
    for &row in eq_rows {
        basis_accepts(basis, &qp.a_eq.row(row).transpose());
    }
    for &row in w {
        basis_accepts(basis, &qp.a_in.row(row).transpose());
    }
}

/// KKT residual of a primal-dual pair: the maximum of the stationarity norm,
/// primal violation, dual negativity and complementarity products.
pub fn kkt_residual(qp: &QpProblem, sol: &QpSolution) -> f64 {
    let stat = (&qp.hess * &sol.t + &qp.c
        - qp.a_eq.transpose() * &sol.lam_eq
        - qp.a_in.transpose() * &sol.lam_in)
        .norm();
    let prim_eq = if qp.b_eq.is_empty() {
        0.0
    } else {
        (&qp.a_eq * &sol.t - &qp.b_eq).amax()
    };
    let prim_in = if qp.b_in.is_empty() {
        0.0
    } else {
        (&qp.b_in - &qp.a_in * &sol.t).max().max(0.0)
    };
    let dual = if sol.lam_in.is_empty() {
        0.0
    } else {
        (-&sol.lam_in).max().max(0.0)
    };
    let comp = if qp.b_in.is_empty() {
        0.0
    } else {
        let slack = &qp.a_in * &sol.t - &qp.b_in;
        (0..slack.len())
            .map(|i| (sol.lam_in[i] * slack[i]).abs())
            .fold(0.0, f64::max)
    };
    stat.max(prim_eq).max(prim_in).max(dual).max(comp)
}
