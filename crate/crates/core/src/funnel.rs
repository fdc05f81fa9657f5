//! The outer loop: line searches, funnel bookkeeping and termination.
//!
//! A nonincreasing bound `theta_max` caps the infeasibility of every
//! iterate. Directions from the penalty loop are consumed by one of two
//! Armijo backtracking searches: f-steps must decrease the objective while
//! staying inside the funnel,
//!
//! ```text
//!     f(x) - f(x + a d) >= -a rho grad f' d,     theta(x + a d) <= theta_max,
//! ```
//!
//! and h-steps must contract the infeasibility,
//!
//! ```text
//!     theta(x + a d) <= (1 - a rho) theta.
//! ```
//!
//! When an f-search underflows its minimal step length, when the subproblem
//! is inconsistent or produces an oversized step, the solver hands off to
//! feasibility restoration and shrinks the funnel. Termination fires when
//! `theta + ||t(u)|| <= epsilon`; the final point is then classified via
//! the recovered MPEC multipliers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{infeasibility, ThetaBreakdown};
use crate::model::{evaluate, Evaluation, MpecProblem};
use crate::restoration::restore;
use crate::stationarity::{
    classify, recover_multipliers_with_eta, stationarity_residual, ClassifyOptions, MpecMultipliers,
    StatClass, StationarityReport,
};
use crate::steps::{
    complementarity_step, penalty_loop, Branch, PenaltyConfig, PenaltyLoopResult, StepOutcome,
};

/// Hessian-model update strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BUpdate {
    /// Keep the identity.
    Identity,
    /// BFGS on objective-gradient differences with Powell damping and an
    /// eigenvalue floor.
    DampedBfgs,
}

/// How the penalty parameter is carried across outer iterations.
///
/// Strict carry-over keeps the accepted value; letting `u` grow back
/// between iterations re-admits tangential motion along `grad Q` that the
/// previous search just suppressed, which on several fixtures turns into a
/// long pump-and-repair oscillation between the branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UCarry {
    /// Carry the accepted value over unchanged.
    Strict,
    /// Start each iteration at `min(u_init, 4 u_prev)`.
    WarmRestart,
}

/// Full solver configuration; penalty-loop parameters are flattened in.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    #[serde(flatten)]
    pub penalty: PenaltyConfig,
    /// Armijo slope factor, in `(0, min(1 - 5 kappa1, 1 - 5 kappa3))`.
    pub rho: f64,
    /// Minimal-step parameters: `alpha_min = min(kappa4, kappa5 theta^sigma3)`.
    pub kappa4: f64,
    pub kappa5: f64,
    pub sigma3: f64,
    /// Funnel shrink factors.
    pub kappa7: f64,
    pub kappa8: f64,
    pub kappa9: f64,
    /// Termination tolerance on `theta + ||t||`.
    pub epsilon: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,
    /// Initial funnel: `theta_max = max(1, factor * theta(x0))`.
    pub theta_max_init_factor: f64,
    /// Activity tolerance of the terminal classifier.
    pub activity_tol: f64,
    pub b_update: BUpdate,
    pub u_carry: UCarry,
    pub restoration_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            penalty: PenaltyConfig::default(),
            rho: 0.25,
            kappa4: 0.1,
            kappa5: 0.1,
            sigma3: 2.0,
            kappa7: 0.5,
            kappa8: 0.9,
            kappa9: 0.5,
            epsilon: 1e-6,
            max_iter: 500,
            max_backtracks: 60,
            theta_max_init_factor: 10.0,
            activity_tol: 1e-6,
            b_update: BUpdate::DampedBfgs,
            u_carry: UCarry::Strict,
            restoration_max_iter: 200,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        self.penalty.validate()?;
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig(msg.into()))
            }
        };
        let rho_bound = (1.0 - 5.0 * self.penalty.kappa1).min(1.0 - 5.0 * self.penalty.kappa3);
        check(
            self.rho > 0.0 && self.rho < rho_bound,
            &format!("rho must lie in (0, {rho_bound}) for the chosen kappa1, kappa3"),
        )?;
        check(
            self.kappa4 > 0.0 && self.kappa4 < 1.0,
            "kappa4 must lie in (0, 1)",
        )?;
        check(
            self.kappa5 > 0.0 && self.kappa5 < 1.0,
            "kappa5 must lie in (0, 1)",
        )?;
        check(self.sigma3 > 1.0, "sigma3 must exceed 1")?;
        for (v, name) in [
            (self.kappa7, "kappa7"),
            (self.kappa8, "kappa8"),
            (self.kappa9, "kappa9"),
        ] {
            check(v > 0.0 && v < 1.0, &format!("{name} must lie in (0, 1)"))?;
        }
        check(self.epsilon > 0.0, "epsilon must be positive")?;
        check(self.max_iter >= 1, "max_iter must be at least 1")?;
        check(self.max_backtracks >= 1, "max_backtracks must be at least 1")?;
        check(
            self.theta_max_init_factor > 0.0,
            "theta_max_init_factor must be positive",
        )?;
        check(self.activity_tol > 0.0, "activity_tol must be positive")?;
        check(
            self.restoration_max_iter >= 1,
            "restoration_max_iter must be at least 1",
        )?;
        Ok(())
    }

    fn classify_opts(&self) -> ClassifyOptions {
        ClassifyOptions {
            feas_tol: self.epsilon.max(1e-6),
            activity_tol: self.activity_tol,
            ..ClassifyOptions::default()
        }
    }
}

/// Kind of an outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    F,
    H,
    Restoration,
}

impl std::fmt::Display for StepKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StepKind::F => write!(f, "F"),
            StepKind::H => write!(f, "H"),
            StepKind::Restoration => write!(f, "R"),
        }
    }
}

/// One row of the iteration trace: the state at `x_k` plus the action
/// taken. The final row records the terminal state with `alpha = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub kind: StepKind,
    pub theta_f: f64,
    pub theta_c: f64,
    pub theta: f64,
    pub theta_max: f64,
    pub f: f64,
    pub alpha: f64,
    pub u: f64,
    pub norm_s: f64,
    pub norm_t: f64,
    pub gamma: f64,
    pub qp_iters: usize,
    pub stat_res: f64,
}

/// Per-iteration extras kept outside the trace schema, used to re-verify
/// the line-search and scaling identities after a run.
#[derive(Debug, Clone, Copy)]
pub struct StepDiag {
    pub k: usize,
    /// `grad f(x_k)' d_k` of the accepted direction.
    pub grad_f_dot_d: f64,
    /// `grad Q' t_raw` of the accepted step.
    pub grad_q_dot_t: f64,
    /// Near-null-space tolerance used by the accepting test.
    pub delta: f64,
    pub gamma: f64,
}

/// Terminal status of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Terminated with a certified S-stationary point.
    SStationaryPoint,
    MaxIterations,
    RestorationFailure,
    /// The complementarity gradient vanished at an infeasible point, or the
    /// terminal point could not be certified.
    Degenerate,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Status::SStationaryPoint => "s_stationary_point",
            Status::MaxIterations => "max_iterations",
            Status::RestorationFailure => "restoration_failure",
            Status::Degenerate => "degenerate",
        };
        write!(f, "{s}")
    }
}

/// Outcome of a solve.
#[derive(Debug)]
pub struct SolveResult {
    pub status: Status,
    pub x: DVector<f64>,
    pub f: f64,
    pub multipliers: Option<MpecMultipliers>,
    pub stationarity: Option<StationarityReport>,
    pub trace: Vec<TraceRecord>,
    pub diagnostics: Vec<StepDiag>,
    pub iterations: usize,
}

/// Minimal step length `alpha_min = min(kappa4, kappa5 theta^sigma3)`.
pub fn alpha_min(theta: f64, cfg: &SolverConfig) -> f64 {
    debug_assert!(theta >= 0.0);
    cfg.kappa4.min(cfg.kappa5 * theta.powf(cfg.sigma3))
}

/// Outcome of a line search.
#[derive(Debug)]
pub enum LineSearchOutcome {
    Accepted { alpha: f64, eval: Evaluation },
    RestorationNeeded,
}

fn eval_trial(
    problem: &MpecProblem,
    x: &DVector<f64>,
    d: &DVector<f64>,
    alpha: f64,
) -> Result<Option<Evaluation>> {
    let trial = x + d * alpha;
    if (&trial - x).amax() == 0.0 {
        // The displacement underflowed; accepting would stall the outer
        // loop on a zero-length step.
        return Ok(None);
    }
    match evaluate(problem, &trial) {
        Ok(e) => Ok(Some(e)),
        Err(Error::NonFinite { .. }) => Ok(None), // reject this step length
        Err(e) => Err(e),
    }
}

/// Backtracking search of the f-branch: Armijo decrease on `f` plus funnel
/// membership; below the minimal step length the search gives up and asks
/// for restoration.
pub fn f_line_search(
    problem: &MpecProblem,
    eval_k: &Evaluation,
    theta_k: f64,
    theta_max: f64,
    d: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<LineSearchOutcome> {
    let gfd = eval_k.grad_f.dot(d);
    let amin = alpha_min(theta_k, cfg);
    let mut alpha = 1.0_f64;
    for _ in 0..cfg.max_backtracks {
        if let Some(te) = eval_trial(problem, &eval_k.x, d, alpha)? {
            let armijo = eval_k.f - te.f >= -alpha * cfg.rho * gfd;
            let inside_funnel = infeasibility(&te).theta <= theta_max;
            if armijo && inside_funnel {
                return Ok(LineSearchOutcome::Accepted { alpha, eval: te });
            }
        }
        if alpha < amin {
            return Ok(LineSearchOutcome::RestorationNeeded);
        }
        alpha *= 0.5;
    }
    Ok(LineSearchOutcome::RestorationNeeded)
}

/// Backtracking search of the h-branch: contraction of the infeasibility
/// measure. The backtrack cap is a safeguard on top of the plain
/// `alpha = alpha / 2` recursion.
pub fn h_line_search(
    problem: &MpecProblem,
    eval_k: &Evaluation,
    theta_k: f64,
    d: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<LineSearchOutcome> {
    let mut alpha = 1.0_f64;
    for _ in 0..cfg.max_backtracks {
        if let Some(te) = eval_trial(problem, &eval_k.x, d, alpha)? {
            if infeasibility(&te).theta <= (1.0 - alpha * cfg.rho) * theta_k {
                return Ok(LineSearchOutcome::Accepted { alpha, eval: te });
            }
        }
        alpha *= 0.5;
    }
    Ok(LineSearchOutcome::RestorationNeeded)
}

/// Funnel update after an accepted iteration.
pub fn update_theta_max(
    kind: StepKind,
    theta_k: f64,
    theta_next: f64,
    theta_max: f64,
    cfg: &SolverConfig,
) -> f64 {
    match kind {
        StepKind::F => theta_max,
        StepKind::Restoration => cfg.kappa7 * theta_max,
        StepKind::H => {
            (cfg.kappa8 * theta_max).max(cfg.kappa9 * theta_k + (1.0 - cfg.kappa9) * theta_next)
        }
    }
}

/// Hessian-model update on the pair `(dx, dgrad)`.
///
/// Powell damping keeps the curvature condition `s'y >= 0.2 s'Bs`; a
/// spectral floor of `1e-6` keeps the model safely positive definite.
/// Degenerate pairs leave the model unchanged.
pub fn update_b(
    b: &DMatrix<f64>,
    dx: &DVector<f64>,
    dgrad: &DVector<f64>,
    mode: BUpdate,
) -> DMatrix<f64> {
    let n = b.nrows();
    match mode {
        BUpdate::Identity => DMatrix::identity(n, n),
        BUpdate::DampedBfgs => {
            if dx.norm() <= 1e-14 || dgrad.norm() <= 1e-14 {
                return b.clone();
            }
            let bs = b * dx;
            let sbs = dx.dot(&bs);
            if sbs <= 1e-16 {
                return b.clone();
            }
            let sy = dx.dot(dgrad);
            let phi = if sy >= 0.2 * sbs {
                1.0
            } else {
                0.8 * sbs / (sbs - sy)
            };
            let r = dgrad * phi + &bs * (1.0 - phi);
            let sr = dx.dot(&r);
            let mut updated = b - &bs * bs.transpose() / sbs + &r * r.transpose() / sr;
            updated = (&updated + updated.transpose()) * 0.5;

            let eig = updated.clone().symmetric_eigen();
            if eig.eigenvalues.min() < 1e-6 {
                let mut vals = eig.eigenvalues.clone();
                for v in vals.iter_mut() {
                    *v = v.max(1e-6);
                }
                let v = &eig.eigenvectors;
                v * DMatrix::from_diagonal(&vals) * v.transpose()
            } else {
                updated
            }
        }
    }
}

struct Loop {
    eval: Evaluation,
    theta: ThetaBreakdown,
    theta_max: f64,
    b: DMatrix<f64>,
    u_prev: f64,
    trace: Vec<TraceRecord>,
    diagnostics: Vec<StepDiag>,
}

impl Loop {
    fn record(&mut self, k: usize, kind: StepKind, alpha: f64, out: Option<&StepOutcome>, stat_res: f64) {
        let (u, norm_s, norm_t, gamma, qp_iters) = match out {
            Some(o) => (o.u, o.s.norm(), o.t_raw.norm(), o.gamma, o.qp_iterations),
            None => (self.u_prev, 0.0, 0.0, 1.0, 0),
        };
        self.trace.push(TraceRecord {
            k,
            kind,
            theta_f: self.theta.theta_f,
            theta_c: self.theta.theta_c,
            theta: self.theta.theta,
            theta_max: self.theta_max,
            f: self.eval.f,
            alpha,
            u,
            norm_s,
            norm_t,
            gamma,
            qp_iters,
            stat_res,
        });
    }

    fn finish(self, status: Status, result: TerminalData, iterations: usize) -> SolveResult {
        SolveResult {
            status,
            f: self.eval.f,
            x: self.eval.x.clone(),
            multipliers: result.multipliers,
            stationarity: result.stationarity,
            trace: self.trace,
            diagnostics: self.diagnostics,
            iterations,
        }
    }
}

#[derive(Default)]
struct TerminalData {
    multipliers: Option<MpecMultipliers>,
    stationarity: Option<StationarityReport>,
}

/// Run the solver from `x0`.
pub fn solve(problem: &MpecProblem, x0: &DVector<f64>, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let eval = evaluate(problem, x0)?;
    let theta = infeasibility(&eval);
    let theta_max = (cfg.theta_max_init_factor * theta.theta).max(1.0);

    let mut state = Loop {
        eval,
        theta,
        theta_max,
        b: DMatrix::identity(problem.n(), problem.n()),
        u_prev: cfg.penalty.u_init,
        trace: Vec::new(),
        diagnostics: Vec::new(),
    };

    for k in 0..cfg.max_iter {
        let comp = complementarity_step(&state.eval);
        let u_start = if k == 0 {
            cfg.penalty.u_init
        } else {
            match cfg.u_carry {
                UCarry::WarmRestart => cfg.penalty.u_init.min(4.0 * state.u_prev),
                UCarry::Strict => state.u_prev,
            }
        };

        let loop_result = penalty_loop(
            &state.eval,
            &comp,
            &state.b,
            &state.theta,
            state.theta_max,
            u_start,
            cfg.epsilon,
            &cfg.penalty,
        )?;

        let needs_restoration = match loop_result {
            PenaltyLoopResult::Inconsistent | PenaltyLoopResult::TooLarge => true,
            PenaltyLoopResult::Step(out) => {
                state.u_prev = out.u;
                let mult = recover_multipliers_with_eta(&out.qp, out.eta, &state.eval);
                let stat_res = stationarity_residual(&state.eval, &mult);

                // Termination on the unscaled tangential step, before the
                // line search.
                if state.theta.theta + out.t_raw.norm() <= cfg.epsilon {
                    let kind = match out.branch {
                        Branch::FStep => StepKind::F,
                        Branch::HStep => StepKind::H,
                    };
                    state.record(k, kind, 0.0, Some(&out), stat_res);
                    let report = classify(&state.eval, &mult, &cfg.classify_opts());
                    let status = if report.class == StatClass::SStationary {
                        Status::SStationaryPoint
                    } else {
                        Status::Degenerate
                    };
                    let data = TerminalData {
                        multipliers: Some(mult),
                        stationarity: Some(report),
                    };
                    return Ok(state.finish(status, data, k));
                }

                let search = match out.branch {
                    Branch::FStep => f_line_search(
                        problem,
                        &state.eval,
                        state.theta.theta,
                        state.theta_max,
                        &out.d,
                        cfg,
                    )?,
                    Branch::HStep => {
                        h_line_search(problem, &state.eval, state.theta.theta, &out.d, cfg)?
                    }
                };

                match search {
                    LineSearchOutcome::Accepted { alpha, eval: next } => {
                        let kind = match out.branch {
                            Branch::FStep => StepKind::F,
                            Branch::HStep => StepKind::H,
                        };
                        state.record(k, kind, alpha, Some(&out), stat_res);
                        state.diagnostics.push(StepDiag {
                            k,
                            grad_f_dot_d: state.eval.grad_f.dot(&out.d),
                            grad_q_dot_t: out.grad_q_dot_t,
                            delta: out.delta,
                            gamma: out.gamma,
                        });

                        let theta_next = infeasibility(&next);
                        state.theta_max = update_theta_max(
                            kind,
                            state.theta.theta,
                            theta_next.theta,
                            state.theta_max,
                            cfg,
                        );
                        let dx = &next.x - &state.eval.x;
                        let dgrad = &next.grad_f - &state.eval.grad_f;
                        state.b = update_b(&state.b, &dx, &dgrad, cfg.b_update);
                        state.eval = next;
                        state.theta = theta_next;
                        false
                    }
                    LineSearchOutcome::RestorationNeeded => true,
                }
            }
        };

        if needs_restoration {
            let target = cfg.kappa7 * state.theta_max;
            let report = restore(problem, &state.eval.x, target, cfg.restoration_max_iter)?;
            if !report.converged {
                // A vanished complementarity gradient at an infeasible
                // point leaves restoration unable to make progress.
                let status = if comp.degenerate {
                    Status::Degenerate
                } else {
                    Status::RestorationFailure
                };
                state.record(k, StepKind::Restoration, 0.0, None, 0.0);
                return Ok(state.finish(status, TerminalData::default(), k));
            }
            state.record(k, StepKind::Restoration, 0.0, None, 0.0);
            state.eval = evaluate(problem, &report.x_r)?;
            state.theta = infeasibility(&state.eval);
            state.theta_max = target;
        }
    }

    Ok(SolveResult {
        status: Status::MaxIterations,
        f: state.eval.f,
        x: state.eval.x.clone(),
        multipliers: None,
        stationarity: None,
        trace: state.trace,
        diagnostics: state.diagnostics,
        iterations: cfg.max_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::registry_get;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn fixture_1d(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        grad: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> MpecProblem {
        // One variable, trivial complementarity pair G = 1, H = 0 keeps
        // theta identically zero.
        MpecProblem::builder("scalar", 1, 1)
            .objective(move |x| f(x[0]), move |x| DVector::from_vec(vec![grad(x[0])]))
            .complementarity(
                |_| DVector::from_vec(vec![1.0]),
                |_| DMatrix::zeros(1, 1),
                |_| DVector::from_vec(vec![0.0]),
                |_| DMatrix::zeros(1, 1),
            )
            .build()
            .unwrap()
    }

    #[test]
    fn alpha_min_formula() {
        let cfg = SolverConfig::default();
        assert_relative_eq!(alpha_min(0.2, &cfg), 0.004);
        assert_eq!(alpha_min(0.0, &cfg), 0.0);
        assert_relative_eq!(alpha_min(10.0, &cfg), 0.1);
    }

    #[test]
    fn f_search_accepts_full_step_on_parabola() {
        let p = fixture_1d(|x| x * x, |x| 2.0 * x);
        let e = evaluate(&p, &DVector::from_vec(vec![1.0])).unwrap();
        let d = DVector::from_vec(vec![-1.0]);
        let cfg = SolverConfig::default();
        match f_line_search(&p, &e, 0.0, 1.0, &d, &cfg).unwrap() {
            LineSearchOutcome::Accepted { alpha, .. } => assert_eq!(alpha, 1.0),
            other => panic!("expected acceptance, got {other:?}"),
        }
    }

    #[test]
    fn f_search_zero_direction_needs_restoration() {
        // No decrease possible along d = 0 when f cannot drop; with
        // theta > 0 the minimal step length eventually fires.
        let p = registry_get("lin_biactive").unwrap();
        let e = evaluate(&p, &DVector::from_vec(vec![1.0, 1.0])).unwrap();
        let d = DVector::from_vec(vec![1.0, 1.0]); // ascent direction
        let cfg = SolverConfig::default();
        match f_line_search(&p, &e, 1.0, 10.0, &d, &cfg).unwrap() {
            LineSearchOutcome::RestorationNeeded => {}
            other => panic!("expected restoration, got {other:?}"),
        }
    }

    #[test]
    fn f_search_halves_when_funnel_violated() {
        // f = -x: Armijo holds at every alpha; theta = |x1 + x2 - 1|
        // (equality) exceeds theta_max at alpha = 1 but not at 1/2.
        let p = MpecProblem::builder("funnel_cut", 2, 1)
            .objective(|x| -x[0], |_| DVector::from_vec(vec![-1.0, 0.0]))
            .equalities(
                1,
                |x| DVector::from_vec(vec![x[0] + x[1] - 1.0]),
                |_| DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
            )
            .complementarity(
                |_| DVector::from_vec(vec![1.0]),
                |_| DMatrix::zeros(2, 1),
                |_| DVector::from_vec(vec![0.0]),
                |_| DMatrix::zeros(2, 1),
            )
            .build()
            .unwrap();
        // x = (1, 0): feasible. d = (2, 0): theta(x + d) = 2, theta(x + d/2) = 1.
        let e = evaluate(&p, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        let d = DVector::from_vec(vec![2.0, 0.0]);
        let mut cfg = SolverConfig::default();
        cfg.rho = 0.1;
        match f_line_search(&p, &e, 0.0, 1.0, &d, &cfg).unwrap() {
            LineSearchOutcome::Accepted { alpha, eval } => {
                assert_eq!(alpha, 0.5);
                // verify both acceptance conditions directly
                assert!(e.f - eval.f >= -alpha * cfg.rho * e.grad_f.dot(&d));
                assert!(infeasibility(&eval).theta <= 1.0);
            }
            other => panic!("expected acceptance at 1/2, got {other:?}"),
        }
    }

    #[test]
    fn h_search_contracts_linear_theta() {
        // theta = |x| through h(x) = x; from x = 1 along d = -1 a full step
        // reaches theta = 0 <= (1 - rho).
        let p = MpecProblem::builder("absval", 1, 1)
            .objective(|_| 0.0, |_| DVector::zeros(1))
            .equalities(
                1,
                |x| DVector::from_vec(vec![x[0]]),
                |_| DMatrix::from_column_slice(1, 1, &[1.0]),
            )
            .complementarity(
                |_| DVector::from_vec(vec![1.0]),
                |_| DMatrix::zeros(1, 1),
                |_| DVector::from_vec(vec![0.0]),
                |_| DMatrix::zeros(1, 1),
            )
            .build()
            .unwrap();
        let e = evaluate(&p, &DVector::from_vec(vec![1.0])).unwrap();
        let cfg = SolverConfig::default();
        match h_line_search(&p, &e, 1.0, &DVector::from_vec(vec![-1.0]), &cfg).unwrap() {
            LineSearchOutcome::Accepted { alpha, eval } => {
                assert_eq!(alpha, 1.0);
                assert!(infeasibility(&eval).theta <= (1.0 - cfg.rho) * 1.0);
            }
            other => panic!("expected acceptance, got {other:?}"),
        }
        // Uphill direction never contracts theta.
        match h_line_search(&p, &e, 1.0, &DVector::from_vec(vec![1.0]), &cfg).unwrap() {
            LineSearchOutcome::RestorationNeeded => {}
            other => panic!("expected restoration, got {other:?}"),
        }
    }

    #[test]
    fn theta_max_update_rules() {
        let cfg = SolverConfig::default();
        assert_eq!(update_theta_max(StepKind::F, 0.7, 0.3, 1.0, &cfg), 1.0);
        assert_relative_eq!(
            update_theta_max(StepKind::Restoration, 0.7, 0.3, 1.0, &cfg),
            0.5
        );
        // H: max(0.9 * 1, 0.5 * 0.5 + 0.5 * 0.3) = 0.9.
        assert_relative_eq!(update_theta_max(StepKind::H, 0.5, 0.3, 1.0, &cfg), 0.9);
    }

    #[test]
    fn b_update_identity_and_exact_curvature() {
        let b = DMatrix::identity(2, 2);
        let s = DVector::from_vec(vec![0.3, -0.1]);
        assert_eq!(update_b(&b, &s, &s, BUpdate::Identity), b);
        // On f = ||x||^2 / 2 the gradient difference equals the step:
        // BFGS reproduces the identity.
        let updated = update_b(&b, &s, &s, BUpdate::DampedBfgs);
        assert!((updated - &b).amax() <= 1e-12);
    }

    #[test]
    fn b_update_degenerate_pair_is_noop() {
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 1.0]);
        let s = DVector::from_vec(vec![0.3, -0.1]);
        let y = DVector::zeros(2);
        assert_eq!(update_b(&b, &s, &y, BUpdate::DampedBfgs), b);
    }

    #[test]
    fn b_update_stays_spd_under_negative_curvature() {
        let b = DMatrix::identity(2, 2);
        let s = DVector::from_vec(vec![1.0, 0.0]);
        let y = DVector::from_vec(vec![-0.5, 0.2]);
        let updated = update_b(&b, &s, &y, BUpdate::DampedBfgs);
        let eig = updated.symmetric_eigen();
        assert!(eig.eigenvalues.min() >= 1e-6 - 1e-12);
    }

    #[test]
    fn solve_lin_biactive_from_ones() {
        let p = registry_get("lin_biactive").unwrap();
        let cfg = SolverConfig::default();
        let r = solve(&p, &DVector::from_vec(vec![1.0, 1.0]), &cfg).unwrap();
        assert_eq!(r.status, Status::SStationaryPoint);
        assert!(r.x.amax() <= 1e-6, "final x = {:?}", r.x);
        let m = r.multipliers.unwrap();
        assert_relative_eq!(m.nu_hat[0], 1.0, epsilon = 1e-4);
        assert_relative_eq!(m.xi_hat[0], 1.0, epsilon = 1e-4);
    }

    #[test]
    fn solve_stationary_start_terminates_immediately() {
        let p = registry_get("lin_biactive").unwrap();
        let cfg = SolverConfig::default();
        let r = solve(&p, &DVector::from_vec(vec![0.0, 0.0]), &cfg).unwrap();
        assert_eq!(r.status, Status::SStationaryPoint);
        assert!(r.iterations <= 1);
    }

    #[test]
    fn solve_quad_branch_reaches_branch_minimum() {
        let p = registry_get("quad_branch").unwrap();
        let cfg = SolverConfig::default();
        let r = solve(&p, &DVector::from_vec(vec![2.0, 0.1]), &cfg).unwrap();
        assert_eq!(r.status, Status::SStationaryPoint);
        assert_relative_eq!(r.f, 1.0, epsilon = 1e-6);
        let on_minimizer = (r.x[0] - 1.0).abs() <= 1e-6 && r.x[1].abs() <= 1e-6
            || (r.x[1] - 1.0).abs() <= 1e-6 && r.x[0].abs() <= 1e-6;
        assert!(on_minimizer, "x = {:?}", r.x);
    }

    #[test]
    fn solve_degenerate_complementarity_reports_degenerate() {
        // Q = x1^2 + 0.3 >= 0.3 everywhere: infeasible with grad Q -> 0 at
        // the restoration limit.
        let p = MpecProblem::builder("stuck", 1, 1)
            .objective(|_| 0.0, |_| DVector::zeros(1))
            .complementarity(
                |x| DVector::from_vec(vec![x[0] * x[0] + 0.3]),
                |x| DMatrix::from_column_slice(1, 1, &[2.0 * x[0]]),
                |_| DVector::from_vec(vec![1.0]),
                |_| DMatrix::zeros(1, 1),
            )
            .build()
            .unwrap();
        let cfg = SolverConfig::default();
        let r = solve(&p, &DVector::from_vec(vec![0.0]), &cfg).unwrap();
        assert_eq!(r.status, Status::Degenerate);
    }

    #[test]
    fn funnel_invariant_holds_along_runs() {
        let p = registry_get("quad_branch").unwrap();
        let cfg = SolverConfig::default();
        let r = solve(&p, &DVector::from_vec(vec![1.8, 1.3]), &cfg).unwrap();
        for rec in &r.trace {
            assert!(
                rec.theta <= rec.theta_max + 1e-12,
                "funnel violated at k = {}",
                rec.k
            );
        }
        for pair in r.trace.windows(2) {
            assert!(pair[1].theta_max <= pair[0].theta_max + 1e-12);
        }
    }

    #[test]
    fn config_rejects_out_of_range_rho() {
        let mut cfg = SolverConfig::default();
        cfg.rho = 0.9; // bound is 1 - 5 * 0.1 = 0.5
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }
}
