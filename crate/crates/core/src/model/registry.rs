//! Built-in test problems with documented analytic solutions.
//!
//! Every fixture here is small enough that its solution set can be derived
//! per complementarity branch by hand; the metadata records the result of
//! that derivation.

use nalgebra::{DMatrix, DVector};

use super::MpecProblem;
use crate::error::{Error, Result};

/// Analytic solution metadata attached to registry problems.
#[derive(Debug, Clone)]
pub struct SolutionInfo {
    /// Global minimizers over the feasible set.
    pub minimizers: Vec<DVector<f64>>,
    /// Objective value at the minimizers.
    pub f_min: f64,
    /// Informal notes (stationarity structure, traps, multipliers).
    pub notes: &'static str,
}

/// Names of the built-in problems, in registry order.
pub fn registry_names() -> Vec<&'static str> {
    vec![
        "lin_biactive",
        "quad_branch",
        "mixed_eq",
        "cstat_fixture",
        "ineq_budget",
    ]
}

/// Look up a built-in problem by name.
pub fn registry_get(name: &str) -> Result<MpecProblem> {
    match name {
        "lin_biactive" => lin_biactive(),
        "quad_branch" => quad_branch(),
        "mixed_eq" => mixed_eq(),
        "cstat_fixture" => cstat_fixture(),
        "ineq_budget" => ineq_budget(),
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

fn comp_x1_x2(
    b: super::MpecProblemBuilder,
) -> super::MpecProblemBuilder {
    // The pair 0 <= x1 perp x2 >= 0 shared by all planar fixtures.
    b.complementarity(
        |x| DVector::from_vec(vec![x[0]]),
        |_| DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
        |x| DVector::from_vec(vec![x[1]]),
        |_| DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
    )
}

/// min x1 + x2  s.t.  0 <= x1 perp x2 >= 0.
///
/// The origin is the unique minimizer and is biactive; the multipliers
/// nu = xi = 1 are both positive, so it is S-stationary.
fn lin_biactive() -> Result<MpecProblem> {
    comp_x1_x2(MpecProblem::builder("lin_biactive", 2, 1).objective(
        |x| x[0] + x[1],
        |_| DVector::from_vec(vec![1.0, 1.0]),
    ))
    .start(DVector::from_vec(vec![1.0, 1.0]))
    .solution(SolutionInfo {
        minimizers: vec![DVector::from_vec(vec![0.0, 0.0])],
        f_min: 0.0,
        notes: "biactive origin, S-stationary with nu = xi = 1",
    })
    .build()
}

/// min (x1-1)^2 + (x2-1)^2  s.t.  0 <= x1 perp x2 >= 0.
///
/// Two branch minimizers (1,0) and (0,1) with f = 1. The origin carries the
/// unique weak multipliers nu = xi = -2 and is only C-stationary.
fn quad_branch() -> Result<MpecProblem> {
    comp_x1_x2(MpecProblem::builder("quad_branch", 2, 1).objective(
        |x| (x[0] - 1.0).powi(2) + (x[1] - 1.0).powi(2),
        |x| DVector::from_vec(vec![2.0 * (x[0] - 1.0), 2.0 * (x[1] - 1.0)]),
    ))
    .start(DVector::from_vec(vec![2.0, 0.1]))
    .solution(SolutionInfo {
        minimizers: vec![
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
        ],
        f_min: 1.0,
        notes: "branch minima (1,0) and (0,1); origin is C-stationary with nu = xi = -2",
    })
    .build()
}

/// min (x1-2)^2 + (x2-1)^2  s.t.  x1 + x2 = 1,  0 <= x1 perp x2 >= 0.
///
/// The feasible set is {(1,0), (0,1)}; comparing objectives picks (1,0)
/// with f = 2.
fn mixed_eq() -> Result<MpecProblem> {
    comp_x1_x2(
        MpecProblem::builder("mixed_eq", 2, 1)
            .objective(
                |x| (x[0] - 2.0).powi(2) + (x[1] - 1.0).powi(2),
                |x| DVector::from_vec(vec![2.0 * (x[0] - 2.0), 2.0 * (x[1] - 1.0)]),
            )
            .equalities(
                1,
                |x| DVector::from_vec(vec![x[0] + x[1] - 1.0]),
                |_| DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
            ),
    )
    .start(DVector::from_vec(vec![2.0, 0.5]))
    .solution(SolutionInfo {
        minimizers: vec![DVector::from_vec(vec![1.0, 0.0])],
        f_min: 2.0,
        notes: "feasible set is {(1,0),(0,1)}; f(1,0) = 2 beats f(0,1) = 4; the default \
                start sits in the basin of (1,0), x2-heavy starts reach the branch point (0,1)",
    })
    .build()
}

/// min (x1^2 + x2^2)/2 - x1 - x2  s.t.  0 <= x1 perp x2 >= 0.
///
/// Branch minima (1,0) and (0,1) with f = -1/2. At the biactive origin the
/// unique weak multipliers are nu = xi = -1: C-stationary but neither M- nor
/// S-stationary, which makes the origin a classifier fixture.
fn cstat_fixture() -> Result<MpecProblem> {
    comp_x1_x2(MpecProblem::builder("cstat_fixture", 2, 1).objective(
        |x| 0.5 * (x[0] * x[0] + x[1] * x[1]) - x[0] - x[1],
        |x| DVector::from_vec(vec![x[0] - 1.0, x[1] - 1.0]),
    ))
    .start(DVector::from_vec(vec![0.5, 2.0]))
    .solution(SolutionInfo {
        minimizers: vec![
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
        ],
        f_min: -0.5,
        notes: "origin is C-stationary (nu = xi = -1) but not M/S; minima on both branches",
    })
    .build()
}

/// min (x1-1)^2 + (x2-1)^2  s.t.  x1 + x2 <= 0.8,  0 <= x1 perp x2 >= 0.
///
/// The budget constraint is active at both minimizers (0.8, 0) and
/// (0, 0.8), exercising the inequality block end to end.
fn ineq_budget() -> Result<MpecProblem> {
    comp_x1_x2(
        MpecProblem::builder("ineq_budget", 2, 1)
            .objective(
                |x| (x[0] - 1.0).powi(2) + (x[1] - 1.0).powi(2),
                |x| DVector::from_vec(vec![2.0 * (x[0] - 1.0), 2.0 * (x[1] - 1.0)]),
            )
            .inequalities(
                1,
                |x| DVector::from_vec(vec![0.8 - x[0] - x[1]]),
                |_| DMatrix::from_column_slice(2, 1, &[-1.0, -1.0]),
            ),
    )
    .start(DVector::from_vec(vec![0.3, 0.3]))
    .solution(SolutionInfo {
        minimizers: vec![
            DVector::from_vec(vec![0.8, 0.0]),
            DVector::from_vec(vec![0.0, 0.8]),
        ],
        f_min: 1.04,
        notes: "budget row active at both minimizers with multiplier 0.4",
    })
    .build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_problems_resolve() {
        for name in registry_names() {
            let p = registry_get(name).unwrap();
            assert_eq!(p.name(), name);
            assert!(p.solution().is_some(), "{name} lacks solution metadata");
            assert!(p.x0().is_some(), "{name} lacks a default start");
        }
    }

    #[test]
    fn unknown_problem_is_an_error() {
        assert!(matches!(
            registry_get("nosuch"),
            Err(Error::UnknownProblem(_))
        ));
    }

    #[test]
    fn quad_branch_metadata() {
        let p = registry_get("quad_branch").unwrap();
        let info = p.solution().unwrap();
        assert_eq!(info.minimizers.len(), 2);
        assert_eq!(info.f_min, 1.0);
    }
}
