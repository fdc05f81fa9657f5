//! Step computation: the complementarity step, the penalized tangential QP
//! and the inner loop that searches the penalty parameter `u`.
//!
//! The trial direction is `d = s + gamma * t` where `s` zeroes the
//! linearized complementarity measure in the least-squares sense and `t`
//! solves
//!
//! ```text
//!     min  (grad f + B s)' t + t' (B + grad Q grad Q' / u) t / 2
//!     s.t. g + Jg'(s+t) >= 0,  h + Jh'(s+t) = 0,
//!          G + JG'(s+t) >= 0,  H + JH'(s+t) >= 0.
//! ```
//!
//! The loop halves `u` until `|grad Q' t|` is small enough for the branch
//! selected by the model decrease; once `u` drops below a floor tied to the
//! required bound, `t` is scaled back toward the null space of `grad Q'`
//! instead.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::ThetaBreakdown;
use crate::model::Evaluation;
use crate::qp::{solve_qp, QpError, QpProblem, QpSolution};

/// Which line-search branch an iteration follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Objective-decrease iteration.
    FStep,
    /// Infeasibility-decrease iteration.
    HStep,
}

/// Parameters of the penalty-parameter search.
///
/// Ranges are checked by [`PenaltyConfig::validate`]; defaults follow the
/// solver-wide configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyConfig {
    /// Initial penalty parameter `u`.
    pub u_init: f64,
    /// Cap in the floor `u_min = min(u_hat, kappa_u * delta^sigma1)`.
    pub u_hat: f64,
    pub kappa_u: f64,
    pub sigma1: f64,
    /// Exponent in the h-branch tolerance, in `(1, sigma1)`.
    pub sigma2: f64,
    /// Tolerance factors of the two branch tests, in `(0, 1/5)`.
    pub kappa1: f64,
    pub kappa3: f64,
    /// Cap inside both branch tolerances.
    pub kappa2: f64,
    /// Model-decrease threshold factor.
    pub kappa_theta: f64,
    /// Absolute size bound in the too-large test.
    pub m_theta: f64,
    /// Scale of the infeasibility-dependent size bound.
    pub kappa6: f64,
    pub sigma4: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            u_init: 1.0,
            u_hat: 1e-2,
            kappa_u: 0.1,
            sigma1: 2.0,
            sigma2: 1.5,
            kappa1: 0.1,
            kappa3: 0.1,
            kappa2: 1.0,
            kappa_theta: 0.1,
            m_theta: 1e4,
            kappa6: 1.0,
            sigma4: 1.0,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig(msg.into()))
            }
        };
        check(self.u_init > 0.0, "u_init must be positive")?;
        check(
            self.u_hat > 0.0 && self.u_hat < 1.0,
            "u_hat must lie in (0, 1)",
        )?;
        check(
            self.kappa_u > 0.0 && self.kappa_u < 1.0,
            "kappa_u must lie in (0, 1)",
        )?;
        check(self.sigma1 > 1.0, "sigma1 must exceed 1")?;
        check(
            self.sigma2 > 1.0 && self.sigma2 < self.sigma1,
            "sigma2 must lie in (1, sigma1)",
        )?;
        check(
            self.kappa1 > 0.0 && self.kappa1 < 0.2,
            "kappa1 must lie in (0, 1/5)",
        )?;
        check(
            self.kappa3 > 0.0 && self.kappa3 < 0.2,
            "kappa3 must lie in (0, 1/5)",
        )?;
        check(self.kappa2 > 0.0, "kappa2 must be positive")?;
        check(self.kappa_theta > 0.0, "kappa_theta must be positive")?;
        check(self.m_theta > 0.0, "m_theta must be positive")?;
        check(self.kappa6 > 0.0, "kappa6 must be positive")?;
        check(self.sigma4 > 0.0, "sigma4 must be positive")?;
        Ok(())
    }
}

/// Least-squares complementarity step.
#[derive(Debug, Clone)]
pub struct CompStep {
    pub s: DVector<f64>,
    /// Set when `grad Q` vanished while `Q` did not: the linearized
    /// complementarity cannot be corrected at this point.
    pub degenerate: bool,
}

/// Step along `-grad Q` that zeroes the linearized complementarity measure:
/// `s = -(Q / ||grad Q||^2) grad Q`, guarded for vanishing `grad Q`.
pub fn complementarity_step(eval: &Evaluation) -> CompStep {
    let gq_norm = eval.grad_q.norm();
    let guard = 1e-12 * eval.q.abs().max(1.0);
    if gq_norm <= guard {
        CompStep {
            s: DVector::zeros(eval.n()),
            degenerate: eval.q != 0.0,
        }
    } else {
        CompStep {
            s: &eval.grad_q * (-eval.q / (gq_norm * gq_norm)),
            degenerate: false,
        }
    }
}

/// Floor below which `u` is no longer reduced:
/// `u_min = min(u_hat, kappa_u * delta^sigma1)`.
pub fn u_min(delta: f64, cfg: &PenaltyConfig) -> f64 {
    debug_assert!(delta >= 0.0);
    cfg.u_hat.min(cfg.kappa_u * delta.powf(cfg.sigma1))
}

/// Near-null-space tolerance of the branch about to be tested.
pub fn delta(branch: Branch, theta: f64, theta_max: f64, cfg: &PenaltyConfig) -> f64 {
    match branch {
        Branch::FStep => cfg.kappa1 * theta_max.min(cfg.kappa2),
        Branch::HStep => cfg.kappa3 * theta.powf(cfg.sigma2 - 1.0).min(cfg.kappa2) * theta,
    }
}

/// Branch selection: an f-step whenever the linearized objective decrease
/// along `s + t` reaches `kappa_theta * theta` (weak inequality, so feasible
/// stationary points terminate on the f-path).
pub fn classify_switch(
    eval: &Evaluation,
    s: &DVector<f64>,
    t: &DVector<f64>,
    theta: f64,
    cfg: &PenaltyConfig,
) -> Branch {
    let decrease = -(eval.grad_f.dot(s) + eval.grad_f.dot(t));
    if decrease >= cfg.kappa_theta * theta {
        Branch::FStep
    } else {
        Branch::HStep
    }
}

/// Accepted direction data from the penalty loop.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub s: DVector<f64>,
    /// Unscaled QP solution `t(u)`.
    pub t_raw: DVector<f64>,
    /// Accepted penalty parameter.
    pub u: f64,
    /// Scaling applied to `t_raw`; 1 unless the fallback fired.
    pub gamma: f64,
    /// Search direction `s + gamma * t_raw`.
    pub d: DVector<f64>,
    /// Near-null-space tolerance used by the accepting test.
    pub delta: f64,
    pub branch: Branch,
    /// QP primal-dual data for multiplier recovery.
    pub qp: QpSolution,
    /// `grad Q' t_raw` at acceptance.
    pub grad_q_dot_t: f64,
    /// Penalty contribution `grad Q' t / u`, evaluated through the QP
    /// stationarity system, which stays accurate when `u` is tiny.
    pub eta: f64,
    /// QP iterations summed over the penalty search.
    pub qp_iterations: usize,
    /// Number of QP solves in the search.
    pub solves: usize,
}

/// Result of the penalty loop: a direction, or a hand-off to restoration.
#[derive(Debug)]
pub enum PenaltyLoopResult {
    Step(StepOutcome),
    /// The linearized constraints admit no solution.
    Inconsistent,
    /// The subproblem produced an unusually large step.
    TooLarge,
}

/// Assemble the tangential QP for penalty parameter `u`.
pub fn tangential_qp(eval: &Evaluation, s: &DVector<f64>, b: &DMatrix<f64>, u: f64) -> QpProblem {
    let n = eval.n();
    let m = eval.m();
    let q = eval.num_pairs();

    let mut hess = b.clone();
    if eval.grad_q.norm() > 0.0 {
        hess += &eval.grad_q * eval.grad_q.transpose() / u;
    }
    let c = &eval.grad_f + b * s;

    let a_eq = eval.jac_h.transpose();
    let b_eq = -(&eval.h + eval.jac_h.transpose() * s);

    let rows = m + 2 * q;
    let mut a_in = DMatrix::zeros(rows, n);
    let mut b_in = DVector::zeros(rows);
    a_in.view_mut((0, 0), (m, n))
        .copy_from(&eval.jac_g.transpose());
    a_in.view_mut((m, 0), (q, n))
        .copy_from(&eval.jac_gc.transpose());
    a_in.view_mut((m + q, 0), (q, n))
        .copy_from(&eval.jac_hc.transpose());
    let bg = -(&eval.g + eval.jac_g.transpose() * s);
    let bgc = -(&eval.gc + eval.jac_gc.transpose() * s);
    let bhc = -(&eval.hc + eval.jac_hc.transpose() * s);
    for i in 0..m {
        b_in[i] = bg[i];
    }
    for i in 0..q {
        b_in[m + i] = bgc[i];
        b_in[m + q + i] = bhc[i];
    }

    QpProblem {
        hess,
        c,
        a_eq,
        b_eq,
        a_in,
        b_in,
    }
}

/// Evaluate `eta = grad Q' t / u` through the stationarity system of the
/// tangential QP,
///
/// ```text
///     (grad Q' t / u) grad Q = A_eq' lam_eq + A_in' lam_in - c - B t,
/// ```
///
/// projected onto `grad Q`. In exact arithmetic this equals the direct
/// quotient; numerically it stays accurate when `u` is many orders below
/// one, where the quotient of a cancelling inner product does not. Falls
/// back to the direct formula when `grad Q` is negligible.
fn eta_from_stationarity(
    eval: &Evaluation,
    qp: &QpProblem,
    sol: &QpSolution,
    b: &DMatrix<f64>,
    u: f64,
) -> f64 {
    let gq = &eval.grad_q;
    let gq_norm2 = gq.norm_squared();
    if gq_norm2 <= 1e-24 {
        return eval.grad_q.dot(&sol.t) / u;
    }
    let resid = qp.a_eq.transpose() * &sol.lam_eq + qp.a_in.transpose() * &sol.lam_in
        - &qp.c
        - b * &sol.t;
    gq.dot(&resid) / gq_norm2
}

/// Search for an acceptable `(u, t(u))` pair, starting from `u_start`.
///
/// Each trial solves the tangential QP, checks the too-large safeguard,
/// selects the branch from the model decrease and accepts when
/// `|grad Q' t|` meets that branch's tolerance. When `u` falls below its
/// floor instead, `t` is scaled so the bound holds by construction and the
/// branch is re-evaluated on the scaled direction.
///
/// `term_eps` is the outer termination tolerance: when the very quantity
/// the outer loop terminates on, `theta + ||t(u)||`, is already below it,
/// the current pair is accepted without reducing `u` further. Grinding `u`
/// down for a direction at roundoff scale would only poison the
/// conditioning of the final multipliers.
pub fn penalty_loop(
    eval: &Evaluation,
    comp: &CompStep,
    b: &DMatrix<f64>,
    theta: &ThetaBreakdown,
    theta_max: f64,
    u_start: f64,
    term_eps: f64,
    cfg: &PenaltyConfig,
) -> Result<PenaltyLoopResult> {
    let s = &comp.s;
    let mut u = u_start;
    let mut qp_iterations = 0usize;
    let mut warm: Option<DVector<f64>> = None;

    let size_bound = if theta.theta > 0.0 {
        cfg.m_theta.max(cfg.kappa6 / theta.theta.powf(cfg.sigma4))
    } else {
        f64::INFINITY
    };

    for solves in 1..=200usize {
        let qp = tangential_qp(eval, s, b, u);
        let sol = match solve_qp(&qp, warm.as_ref()) {
            Ok(sol) => sol,
            Err(QpError::Infeasible { .. }) => return Ok(PenaltyLoopResult::Inconsistent),
            Err(QpError::MaxIterations) => {
                return Err(Error::NumericalBreakdown(
                    "tangential QP hit its iteration limit".into(),
                ))
            }
            Err(QpError::NumericalBreakdown(msg)) => return Err(Error::NumericalBreakdown(msg)),
        };
        qp_iterations += sol.iterations;
        let t = sol.t.clone();

        if s.norm().max(t.norm()) >= size_bound {
            return Ok(PenaltyLoopResult::TooLarge);
        }

        let gqt = eval.grad_q.dot(&t);
        let branch = classify_switch(eval, s, &t, theta.theta, cfg);
        let dlt = delta(branch, theta.theta, theta_max, cfg);
        let accept = |gamma: f64, branch: Branch, t: DVector<f64>, sol: QpSolution| {
            let eta = eta_from_stationarity(eval, &qp, &sol, b, u);
            let d = s + &t * gamma;
            PenaltyLoopResult::Step(StepOutcome {
                s: s.clone(),
                t_raw: t,
                u,
                gamma,
                d,
                delta: dlt,
                branch,
                qp: sol,
                grad_q_dot_t: gqt,
                eta,
                qp_iterations,
                solves,
            })
        };

        if gqt.abs() <= dlt || theta.theta + t.norm() <= term_eps {
            return Ok(accept(1.0, branch, t, sol));
        }

        if u < u_min(dlt, cfg) {
            // Scale toward the null space of grad Q'; after scaling the
            // branch is re-evaluated on the direction actually used.
            let gamma = (dlt / gqt.abs()).min(1.0);
            let branch = classify_switch(eval, s, &(&t * gamma), theta.theta, cfg);
            return Ok(accept(gamma, branch, t, sol));
        }

        warm = Some(t);
        u *= 0.5;
    }

    Err(Error::NumericalBreakdown(
        "penalty-parameter search did not terminate".into(),
    ))
}
