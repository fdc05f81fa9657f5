//! MPEC multiplier recovery and stationarity classification.
//!
//! The tangential QP returns multipliers `(lambda, mu, nu, xi)` for its
//! linearized constraint rows. With the penalty contribution
//! `eta = grad Q' t / u` folded into the complementarity blocks,
//!
//! ```text
//!     nu_hat = nu - eta * H(x),     xi_hat = xi - eta * G(x),
//! ```
//!
//! the stationarity system of the MPEC Lagrangian
//!
//! ```text
//!     grad f - Jg lambda + Jh mu - JG nu_hat - JH xi_hat = 0
//! ```
//!
//! is what the classifier tests. On the biactive pairs the signs of
//! `(nu_hat, xi_hat)` separate the nested classes: products nonnegative is
//! C-stationary, each pair strictly positive or with vanishing product is
//! M-stationary, and both components nonnegative is S-stationary.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::measures::{active_sets, infeasibility};
use crate::model::Evaluation;
use crate::qp::{solve_qp, QpProblem, QpSolution};

/// Recovered MPEC multipliers.
#[derive(Debug, Clone)]
pub struct MpecMultipliers {
    /// Inequality multipliers, nonnegative.
    pub lambda: DVector<f64>,
    /// Equality multipliers, sign-free.
    pub mu: DVector<f64>,
    /// Raw QP multipliers of the G and H blocks.
    pub nu: DVector<f64>,
    pub xi: DVector<f64>,
    /// Penalty contribution `grad Q' t / u`.
    pub eta: f64,
    /// Corrected complementarity multipliers.
    pub nu_hat: DVector<f64>,
    pub xi_hat: DVector<f64>,
}

/// Map QP multipliers back to MPEC multipliers, with
/// `eta = grad Q' t / u` computed by the direct quotient.
///
/// The QP stacks its inequality rows as `[g; G; H]`, and its equality
/// multipliers carry the opposite sign convention from the MPEC Lagrangian,
/// hence `mu = -lam_eq`.
pub fn recover_multipliers(
    qp_sol: &QpSolution,
    u: f64,
    t: &DVector<f64>,
    eval: &Evaluation,
) -> MpecMultipliers {
    assert!(u > 0.0);
    recover_multipliers_with_eta(qp_sol, eval.grad_q.dot(t) / u, eval)
}

/// Recovery from a pre-evaluated `eta`; the solver passes the value
/// extracted from the QP stationarity system, which is the same quantity
/// evaluated without the cancellation the direct quotient suffers for
/// very small `u`.
pub fn recover_multipliers_with_eta(
    qp_sol: &QpSolution,
    eta: f64,
    eval: &Evaluation,
) -> MpecMultipliers {
    let m = eval.m();
    let q = eval.num_pairs();
    assert_eq!(qp_sol.lam_in.len(), m + 2 * q);

    let lambda = qp_sol.lam_in.rows(0, m).clone_owned();
    let nu = qp_sol.lam_in.rows(m, q).clone_owned();
    let xi = qp_sol.lam_in.rows(m + q, q).clone_owned();
    let mu = -qp_sol.lam_eq.clone();
    let nu_hat = &nu - &eval.hc * eta;
    let xi_hat = &xi - &eval.gc * eta;
    MpecMultipliers {
        lambda,
        mu,
        nu,
        xi,
        eta,
        nu_hat,
        xi_hat,
    }
}

/// Residual of the weak-stationarity system built from recovered
/// multipliers.
pub fn stationarity_residual(eval: &Evaluation, mult: &MpecMultipliers) -> f64 {
    (&eval.grad_f - &eval.jac_g * &mult.lambda + &eval.jac_h * &mult.mu
        - &eval.jac_gc * &mult.nu_hat
        - &eval.jac_hc * &mult.xi_hat)
        .norm()
}

/// Nested stationarity classes, weakest to strongest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StatClass {
    NotWeaklyStationary,
    Weak,
    CStationary,
    MStationary,
    SStationary,
}

impl std::fmt::Display for StatClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StatClass::NotWeaklyStationary => "not_weakly_stationary",
            StatClass::Weak => "weak",
            StatClass::CStationary => "C",
            StatClass::MStationary => "M",
            StatClass::SStationary => "S",
        };
        write!(f, "{s}")
    }
}

/// Classification tolerances.
#[derive(Debug, Clone, Copy)]
pub struct ClassifyOptions {
    /// Feasibility threshold on theta.
    pub feas_tol: f64,
    /// Tolerance on the stationarity residual and the complementary
    /// slackness products.
    pub stat_tol: f64,
    /// Sign tolerance on multipliers.
    pub sign_tol: f64,
    /// Activity tolerance for the biactive set.
    pub activity_tol: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            feas_tol: 1e-6,
            stat_tol: 1e-6,
            sign_tol: 1e-8,
            activity_tol: 1e-6,
        }
    }
}

/// Classification result.
#[derive(Debug, Clone)]
pub struct StationarityReport {
    pub class: StatClass,
    /// Residual of the weak-stationarity system.
    pub kkt_residual: f64,
    /// Biactive pairs as `(index, nu_hat, xi_hat)`.
    pub biactive: Vec<(usize, f64, f64)>,
    /// Why the point failed the weak test, when it did.
    pub reason: Option<String>,
}

/// Per-pair sign tests. The product tests are scaled by
/// `max(1, |nu|, |xi|)` so that the class ordering S => M => C holds for
/// every input, also near the tolerance boundaries.
fn pair_flags(nu: f64, xi: f64, tol: f64) -> (bool, bool, bool) {
    let scale = nu.abs().max(xi.abs()).max(1.0);
    let s_ok = nu >= -tol && xi >= -tol;
    let m_ok = (nu > tol && xi > tol) || (nu * xi).abs() <= tol * scale;
    let c_ok = nu * xi >= -tol * scale;
    (s_ok, m_ok, c_ok)
}

/// Classify a point given its multipliers.
pub fn classify(
    eval: &Evaluation,
    mult: &MpecMultipliers,
    opts: &ClassifyOptions,
) -> StationarityReport {
    let theta = infeasibility(eval);
    let residual = stationarity_residual(eval, mult);
    let sets = active_sets(eval, opts.activity_tol);
    let biactive: Vec<(usize, f64, f64)> = sets
        .biactive()
        .into_iter()
        .map(|i| (i, mult.nu_hat[i], mult.xi_hat[i]))
        .collect();

    if theta.theta > opts.feas_tol {
        return StationarityReport {
            class: StatClass::NotWeaklyStationary,
            kkt_residual: residual,
            biactive,
            reason: Some(format!(
                "infeasible: theta = {:.3e} exceeds {:.3e}",
                theta.theta, opts.feas_tol
            )),
        };
    }

    // Weak stationarity: residual, multiplier signs, complementary
    // slackness products.
    let mut reason = None;
    if residual > opts.stat_tol * eval.grad_f.norm().max(1.0) {
        reason = Some(format!("stationarity residual {residual:.3e}"));
    }
    if reason.is_none() {
        if let Some(i) = (0..mult.lambda.len()).find(|&i| mult.lambda[i] < -opts.sign_tol) {
            reason = Some(format!("lambda[{i}] = {:.3e} negative", mult.lambda[i]));
        }
    }
    if reason.is_none() {
        let prod_bad = |mval: f64, cval: f64| {
            (mval * cval).abs() > opts.stat_tol * mval.abs().max(cval.abs()).max(1.0)
        };
        for i in 0..mult.lambda.len() {
            if prod_bad(mult.lambda[i], eval.g[i]) {
                reason = Some(format!("complementary slackness fails on g[{i}]"));
                break;
            }
        }
        if reason.is_none() {
            for i in 0..mult.nu_hat.len() {
                if prod_bad(mult.nu_hat[i], eval.gc[i]) {
                    reason = Some(format!("complementary slackness fails on G[{i}]"));
                    break;
                }
                if prod_bad(mult.xi_hat[i], eval.hc[i]) {
                    reason = Some(format!("complementary slackness fails on H[{i}]"));
                    break;
                }
            }
        }
    }
    if let Some(reason) = reason {
        return StationarityReport {
            class: StatClass::NotWeaklyStationary,
            kkt_residual: residual,
            biactive,
            reason: Some(reason),
        };
    }

    let mut s_all = true;
    let mut m_all = true;
    let mut c_all = true;
    for &(_, nu, xi) in &biactive {
        let (s_ok, m_ok, c_ok) = pair_flags(nu, xi, opts.sign_tol);
        s_all &= s_ok;
        m_all &= m_ok;
        c_all &= c_ok;
    }
    let class = if s_all {
        StatClass::SStationary
    } else if m_all {
        StatClass::MStationary
    } else if c_all {
        StatClass::CStationary
    } else {
        StatClass::Weak
    };
    StationarityReport {
        class,
        kkt_residual: residual,
        biactive,
        reason: None,
    }
}

/// Estimate weak-stationarity multipliers at a point by sign-constrained
/// least squares on the active constraints. Used by the front end when no
/// multipliers are supplied.
pub fn estimate_multipliers(eval: &Evaluation, opts: &ClassifyOptions) -> Result<MpecMultipliers> {
    let sets = active_sets(eval, opts.activity_tol);
    let n = eval.n();
    let p = eval.p();

    // Columns of the residual map grad_f + M z.
    let mut cols: Vec<DVector<f64>> = Vec::new();
    let mut lambda_coords: Vec<usize> = Vec::new();
    for &i in &sets.g {
        lambda_coords.push(cols.len());
        cols.push(-eval.jac_g.column(i).clone_owned());
    }
    for j in 0..p {
        cols.push(eval.jac_h.column(j).clone_owned());
    }
    for &i in &sets.gc {
        cols.push(-eval.jac_gc.column(i).clone_owned());
    }
    for &i in &sets.hc {
        cols.push(-eval.jac_hc.column(i).clone_owned());
    }

    let k = cols.len();
    let mut lambda = DVector::zeros(eval.m());
    let mut mu = DVector::zeros(p);
    let mut nu = DVector::zeros(eval.num_pairs());
    let mut xi = DVector::zeros(eval.num_pairs());

    if k > 0 {
        let mut mat = DMatrix::zeros(n, k);
        for (j, c) in cols.iter().enumerate() {
            mat.set_column(j, c);
        }
        let hess = mat.transpose() * &mat * 2.0 + DMatrix::identity(k, k) * 1e-10;
        let c = mat.transpose() * &eval.grad_f * 2.0;
        let mut a_in = DMatrix::zeros(lambda_coords.len(), k);
        for (r, &j) in lambda_coords.iter().enumerate() {
            a_in[(r, j)] = 1.0;
        }
        let qp = QpProblem {
            hess,
            c,
            a_eq: DMatrix::zeros(0, k),
            b_eq: DVector::zeros(0),
            a_in,
            b_in: DVector::zeros(lambda_coords.len()),
        };
        let sol = solve_qp(&qp, Some(&DVector::zeros(k)))
            .map_err(|e| Error::NumericalBreakdown(e.to_string()))?;

        let mut idx = 0;
        for &i in &sets.g {
            lambda[i] = sol.t[idx];
            idx += 1;
        }
        for j in 0..p {
            mu[j] = sol.t[idx];
            idx += 1;
        }
        for &i in &sets.gc {
            nu[i] = sol.t[idx];
            idx += 1;
        }
        for &i in &sets.hc {
            xi[i] = sol.t[idx];
            idx += 1;
        }
    }

    Ok(MpecMultipliers {
        lambda,
        mu,
        nu_hat: nu.clone(),
        xi_hat: xi.clone(),
        nu,
        xi,
        eta: 0.0,
    })
}

/// Constraint-qualification diagnostic.
#[derive(Debug, Clone)]
pub struct MfcqReport {
    pub holds: bool,
    /// Linear independence of the pinned-constraint gradients.
    pub rank_ok: bool,
    /// Optimal margin of the strict-inequality system; infinite when no
    /// strict rows exist.
    pub margin: f64,
    /// True when there were no strict rows to test.
    pub vacuous: bool,
}

/// Test MFCQ of the relaxed problem at a point.
///
/// The gradients of `h`, of `G` on pairs where only `G` is active and of
/// `H` on pairs where only `H` is active must be linearly independent, and
/// a direction `d` must exist that is orthogonal to all of them while
/// making the active inequality gradients strictly positive. Existence is
/// decided by maximizing a margin `tau` with `||d||_inf <= 1` through a
/// lightly regularized QP; MFCQ holds when the rank test passes and the
/// optimal margin exceeds `tol`.
pub fn mfcq_diagnostic(eval: &Evaluation, tol: f64) -> Result<MfcqReport> {
    let sets = active_sets(eval, tol.max(1e-12));
    let n = eval.n();
    let p = eval.p();

    // Rank test on the pinned columns.
    let mut pinned: Vec<DVector<f64>> = Vec::new();
    for i in sets.gc_only() {
        pinned.push(eval.jac_gc.column(i).clone_owned());
    }
    for i in sets.hc_only() {
        pinned.push(eval.jac_hc.column(i).clone_owned());
    }
    for j in 0..p {
        pinned.push(eval.jac_h.column(j).clone_owned());
    }
    let rank_ok = if pinned.is_empty() {
        true
    } else if pinned.len() > n {
        false
    } else {
        let mut mat = DMatrix::zeros(n, pinned.len());
        for (j, c) in pinned.iter().enumerate() {
            mat.set_column(j, c);
        }
        let svd = mat.svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        smin > tol * smax.max(1.0)
    };

    // Strict rows: active g plus both sides of biactive pairs.
    let mut strict: Vec<DVector<f64>> = Vec::new();
    for &i in &sets.g {
        strict.push(eval.jac_g.column(i).clone_owned());
    }
    for i in sets.biactive() {
        strict.push(eval.jac_gc.column(i).clone_owned());
        strict.push(eval.jac_hc.column(i).clone_owned());
    }

    if strict.is_empty() {
        return Ok(MfcqReport {
            holds: rank_ok,
            rank_ok,
            margin: f64::INFINITY,
            vacuous: true,
        });
    }

    // Margin problem in z = (d, tau): maximize tau subject to
    // pinned' d = 0, strict' d >= tau, -1 <= d <= 1.
    let dim = n + 1;
    let mut a_eq = DMatrix::zeros(pinned.len(), dim);
    for (r, col) in pinned.iter().enumerate() {
        for j in 0..n {
            a_eq[(r, j)] = col[j];
        }
    }
    let rows = strict.len() + 2 * n;
    let mut a_in = DMatrix::zeros(rows, dim);
    let mut b_in = DVector::zeros(rows);
    for (r, col) in strict.iter().enumerate() {
        for j in 0..n {
            a_in[(r, j)] = col[j];
        }
        a_in[(r, n)] = -1.0;
    }
    for j in 0..n {
        // d_j >= -1 and -d_j >= -1
        a_in[(strict.len() + 2 * j, j)] = 1.0;
        b_in[strict.len() + 2 * j] = -1.0;
        a_in[(strict.len() + 2 * j + 1, j)] = -1.0;
        b_in[strict.len() + 2 * j + 1] = -1.0;
    }
    let mut c = DVector::zeros(dim);
    c[n] = -1.0;
    let qp = QpProblem {
        hess: DMatrix::identity(dim, dim) * 1e-8,
        c,
        a_eq,
        b_eq: DVector::zeros(pinned.len()),
        a_in,
        b_in,
    };
    let sol = solve_qp(&qp, Some(&DVector::zeros(dim)))
        .map_err(|e| Error::NumericalBreakdown(format!("MFCQ margin QP failed: {e}")))?;
    let margin = sol.t[n];

    Ok(MfcqReport {
        holds: rank_ok && margin > tol,
        rank_ok,
        margin,
        vacuous: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{evaluate, registry_get, MpecProblem};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn eval_at(name: &str, x: &[f64]) -> Evaluation {
        let p = registry_get(name).unwrap();
        evaluate(&p, &DVector::from_vec(x.to_vec())).unwrap()
    }

    fn mults(
        lambda: &[f64],
        mu: &[f64],
        nu_hat: &[f64],
        xi_hat: &[f64],
    ) -> MpecMultipliers {
        MpecMultipliers {
            lambda: DVector::from_vec(lambda.to_vec()),
            mu: DVector::from_vec(mu.to_vec()),
            nu: DVector::from_vec(nu_hat.to_vec()),
            xi: DVector::from_vec(xi_hat.to_vec()),
            eta: 0.0,
            nu_hat: DVector::from_vec(nu_hat.to_vec()),
            xi_hat: DVector::from_vec(xi_hat.to_vec()),
        }
    }

    #[test]
    fn recover_zero_tangential_step() {
        let e = eval_at("lin_biactive", &[0.0, 0.0]);
        let qp_sol = crate::qp::QpSolution {
            t: DVector::zeros(2),
            lam_eq: DVector::zeros(0),
            lam_in: DVector::from_vec(vec![1.0, 1.0]),
            active: vec![0, 1],
            kkt_residual: 0.0,
            iterations: 1,
            objective_trace: vec![],
        };
        let m = recover_multipliers(&qp_sol, 0.5, &DVector::zeros(2), &e);
        assert_eq!(m.eta, 0.0);
        assert_eq!(m.nu_hat, m.nu);
        assert_eq!(m.xi_hat, m.xi);
    }

    #[test]
    fn recover_eta_arithmetic() {
        // u = 0.1, grad Q' t = 0.01 -> eta = 0.1; H = 0 leaves nu_hat = nu.
        let e = eval_at("quad_branch", &[1.0, 0.0]); // grad_q = (0, 1)
        let t = DVector::from_vec(vec![0.0, 0.01]);
        let qp_sol = crate::qp::QpSolution {
            t: t.clone(),
            lam_eq: DVector::zeros(0),
            lam_in: DVector::from_vec(vec![1.0, 0.0]),
            active: vec![],
            kkt_residual: 0.0,
            iterations: 1,
            objective_trace: vec![],
        };
        let m = recover_multipliers(&qp_sol, 0.1, &t, &e);
        assert_relative_eq!(m.eta, 0.1);
        assert_relative_eq!(m.nu_hat[0], m.nu[0] - 0.1 * e.hc[0]);
        assert_relative_eq!(m.nu_hat[0], 1.0);
    }

    #[test]
    fn recovery_identities_reconstruct() {
        let e = eval_at("lin_biactive", &[0.3, 0.4]);
        let t = DVector::from_vec(vec![-0.2, 0.7]);
        let qp_sol = crate::qp::QpSolution {
            t: t.clone(),
            lam_eq: DVector::zeros(0),
            lam_in: DVector::from_vec(vec![0.3, 1.7]),
            active: vec![],
            kkt_residual: 0.0,
            iterations: 1,
            objective_trace: vec![],
        };
        let m = recover_multipliers(&qp_sol, 0.25, &t, &e);
        assert_eq!(m.nu_hat[0] + m.eta * e.hc[0], m.nu[0]);
        assert_eq!(m.xi_hat[0] + m.eta * e.gc[0], m.xi[0]);
    }

    #[test]
    fn classify_lin_biactive_s_point() {
        let e = eval_at("lin_biactive", &[0.0, 0.0]);
        let r = classify(&e, &mults(&[], &[], &[1.0], &[1.0]), &ClassifyOptions::default());
        assert_eq!(r.class, StatClass::SStationary);
        assert!(r.kkt_residual <= 1e-12);
        assert_eq!(r.biactive.len(), 1);
    }

    #[test]
    fn classify_quad_branch_origin_is_c() {
        let e = eval_at("quad_branch", &[0.0, 0.0]);
        let r = classify(
            &e,
            &mults(&[], &[], &[-2.0], &[-2.0]),
            &ClassifyOptions::default(),
        );
        assert_eq!(r.class, StatClass::CStationary);
    }

    #[test]
    fn classify_branch_minimum_is_vacuously_s() {
        // (1,0): biactive set empty, xi_hat free.
        let e = eval_at("quad_branch", &[1.0, 0.0]);
        let r = classify(
            &e,
            &mults(&[], &[], &[0.0], &[-2.0]),
            &ClassifyOptions::default(),
        );
        assert_eq!(r.class, StatClass::SStationary);
        assert!(r.biactive.is_empty());
    }

    #[test]
    fn classify_rejects_infeasible_points() {
        let e = eval_at("lin_biactive", &[1.0, 1.0]);
        let r = classify(&e, &mults(&[], &[], &[0.0], &[0.0]), &ClassifyOptions::default());
        assert_eq!(r.class, StatClass::NotWeaklyStationary);
        assert!(r.reason.unwrap().contains("infeasible"));
    }

    #[test]
    fn pair_flags_are_nested() {
        // S => M => C for a grid of values around the tolerance.
        let tol = 1e-8;
        let vals = [-10.0, -1.0, -2e-8, -1e-9, 0.0, 1e-9, 2e-8, 1.0, 1000.0];
        for &nu in &vals {
            for &xi in &vals {
                let (s, m, c) = pair_flags(nu, xi, tol);
                assert!(!s || m, "S without M at ({nu}, {xi})");
                assert!(!m || c, "M without C at ({nu}, {xi})");
            }
        }
    }

    #[test]
    fn estimate_multipliers_quad_branch_origin() {
        let e = eval_at("quad_branch", &[0.0, 0.0]);
        let m = estimate_multipliers(&e, &ClassifyOptions::default()).unwrap();
        assert_relative_eq!(m.nu_hat[0], -2.0, epsilon = 1e-5);
        assert_relative_eq!(m.xi_hat[0], -2.0, epsilon = 1e-5);
        let r = classify(&e, &m, &ClassifyOptions::default());
        assert_eq!(r.class, StatClass::CStationary);
    }

    #[test]
    fn mfcq_holds_at_biactive_origin() {
        let e = eval_at("lin_biactive", &[0.0, 0.0]);
        let r = mfcq_diagnostic(&e, 1e-6).unwrap();
        assert!(r.holds);
        assert!(r.rank_ok);
        assert!(r.margin > 0.5, "margin {}", r.margin);
    }

    #[test]
    fn mfcq_fails_with_duplicated_equalities() {
        let p = MpecProblem::builder("dup_eq", 2, 1)
            .objective(|_| 0.0, |_| DVector::zeros(2))
            .equalities(
                2,
                |x| DVector::from_vec(vec![x[0], x[0]]),
                |_| DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]),
            )
            .complementarity(
                |x| DVector::from_vec(vec![x[0]]),
                |_| DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
                |x| DVector::from_vec(vec![x[1]]),
                |_| DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
            )
            .build()
            .unwrap();
        let e = evaluate(&p, &DVector::zeros(2)).unwrap();
        let r = mfcq_diagnostic(&e, 1e-6).unwrap();
        assert!(!r.rank_ok);
        assert!(!r.holds);
    }

    #[test]
    fn mfcq_vacuous_when_nothing_active() {
        let e = eval_at("lin_biactive", &[1.0, 1.0]);
        let r = mfcq_diagnostic(&e, 1e-6).unwrap();
        assert!(r.vacuous);
        assert!(r.holds);
        assert!(r.margin.is_infinite());
    }
}
