//! A solver for mathematical programs with equilibrium constraints (MPECs)
//!
//! ```text
//!     minimize    f(x)
//!     subject to  g(x) >= 0,  h(x) = 0,
//!                 G(x) >= 0,  H(x) >= 0,  G(x)' H(x) = 0
//! ```
//!
//! The method treats the complementarity measure `Q(x) = G(x)'H(x)` and the
//! remaining nonlinear program as two coupled subproblems. Each iteration
//! combines a least-squares complementarity step with a tangential step from
//! a strictly convex QP in which motion along `grad Q` is penalized, and a
//! funnel — a nonincreasing bound on total infeasibility that no iterate may
//! violate — arbitrates between objective and feasibility progress through
//! two Armijo line searches. A feasibility restoration phase handles
//! inconsistent or degenerate subproblems, and at termination the QP
//! multipliers are converted to MPEC multipliers to certify the stationarity
//! class of the final point.
//!
//! Modules:
//! - [`model`]: problem abstraction, evaluation cache, gradient checking,
//!   quadratic-MPEC ingestion and the fixture registry,
//! - [`measures`]: infeasibility measures and active sets,
//! - [`qp`]: dense active-set convex QP solver,
//! - [`steps`]: complementarity and penalized tangential steps,
//! - [`funnel`]: line searches, funnel updates and the outer loop,
//! - [`restoration`]: elastic-mode feasibility restoration,
//! - [`stationarity`]: multiplier recovery, stationarity classification and
//!   an MFCQ diagnostic.

pub mod error;
pub mod funnel;
pub mod measures;
pub mod model;
pub mod qp;
pub mod restoration;
pub mod stationarity;
pub mod steps;

pub use error::{Error, Result};
pub use funnel::{solve, SolveResult, SolverConfig, Status};
pub use measures::{active_sets, infeasibility, ActiveSets, ThetaBreakdown};
pub use model::{
    check_gradients, evaluate, load_quadratic_mpec, registry_get, registry_names, Evaluation,
    GradientReport, MpecProblem,
};
pub use stationarity::{classify, recover_multipliers, MpecMultipliers, StatClass};
