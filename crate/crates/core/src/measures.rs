//! Infeasibility measures and active index sets.
//!
//! Total infeasibility splits into a general part and a complementarity
//! part,
//!
//! ```text
//!     theta   = theta_f + theta_c
//!     theta_f = ||(g)^-|| + ||h|| + ||(G)^-|| + ||(H)^-||
//!     theta_c = |Q| = |G'H|
//! ```
//!
//! with Euclidean norms and the componentwise negative part
//! `(v)^-_i = max(0, -v_i)`.

use nalgebra::DVector;

use crate::model::Evaluation;

/// Infeasibility split into its general and complementarity parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaBreakdown {
    /// Violation of g, h and the nonnegativity of G, H.
    pub theta_f: f64,
    /// Complementarity violation |Q|.
    pub theta_c: f64,
    /// Total: `theta_f + theta_c`.
    pub theta: f64,
}

/// Componentwise negative part.
pub fn negative_part(v: &DVector<f64>) -> DVector<f64> {
    v.map(|c| (-c).max(0.0))
}

/// Compute the infeasibility breakdown at a cached evaluation.
pub fn infeasibility(eval: &Evaluation) -> ThetaBreakdown {
    let theta_f = negative_part(&eval.g).norm()
        + eval.h.norm()
        + negative_part(&eval.gc).norm()
        + negative_part(&eval.hc).norm();
    let theta_c = eval.q.abs();
    ThetaBreakdown {
        theta_f,
        theta_c,
        theta: theta_f + theta_c,
    }
}

/// Index sets of (approximately) active constraints.
///
/// An index is active when the component is within `tol * max(1, ||.||_inf)`
/// of zero; the relative scaling lets the classifier work at approximately
/// feasible points.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSets {
    /// Active inequalities of g.
    pub g: Vec<usize>,
    /// Pairs with G active.
    pub gc: Vec<usize>,
    /// Pairs with H active.
    pub hc: Vec<usize>,
    /// Activity tolerance that was used.
    pub tol: f64,
}

impl ActiveSets {
    /// Biactive pairs, i.e. indices active in both G and H.
    pub fn biactive(&self) -> Vec<usize> {
        self.gc
            .iter()
            .copied()
            .filter(|i| self.hc.contains(i))
            .collect()
    }

    /// Pairs active in G only.
    pub fn gc_only(&self) -> Vec<usize> {
        self.gc
            .iter()
            .copied()
            .filter(|i| !self.hc.contains(i))
            .collect()
    }

    /// Pairs active in H only.
    pub fn hc_only(&self) -> Vec<usize> {
        self.hc
            .iter()
            .copied()
            .filter(|i| !self.gc.contains(i))
            .collect()
    }
}

fn active_indices(v: &DVector<f64>, tol: f64) -> Vec<usize> {
    let scale = v.amax().max(1.0);
    (0..v.len()).filter(|&i| v[i].abs() <= tol * scale).collect()
}

/// Determine active index sets at a cached evaluation.
pub fn active_sets(eval: &Evaluation, tol: f64) -> ActiveSets {
    assert!(tol > 0.0, "activity tolerance must be positive");
    ActiveSets {
        g: active_indices(&eval.g, tol),
        gc: active_indices(&eval.gc, tol),
        hc: active_indices(&eval.hc, tol),
        tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{evaluate, registry_get};
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn eval_at(name: &str, x: &[f64]) -> Evaluation {
        let p = registry_get(name).unwrap();
        evaluate(&p, &DVector::from_vec(x.to_vec())).unwrap()
    }

    #[test]
    fn feasible_point_has_zero_theta() {
        let t = infeasibility(&eval_at("lin_biactive", &[0.0, 0.0]));
        assert_eq!(t.theta, 0.0);
        assert_eq!(t.theta_f, 0.0);
        assert_eq!(t.theta_c, 0.0);
    }

    #[test]
    fn complementarity_violation_only() {
        // (1,1): both G and H positive, Q = 1.
        let t = infeasibility(&eval_at("lin_biactive", &[1.0, 1.0]));
        assert_relative_eq!(t.theta_f, 0.0);
        assert_relative_eq!(t.theta_c, 1.0);
        assert_relative_eq!(t.theta, 1.0);
    }

    #[test]
    fn mixed_violation() {
        // (-1, 2): (G)^- = 1, Q = -2.
        let t = infeasibility(&eval_at("lin_biactive", &[-1.0, 2.0]));
        assert_relative_eq!(t.theta_f, 1.0);
        assert_relative_eq!(t.theta_c, 2.0);
        assert_relative_eq!(t.theta, 3.0);
    }

    #[test]
    fn scaling_fixture() {
        // Doubling the point doubles theta_f and quadruples theta_c.
        let a = infeasibility(&eval_at("lin_biactive", &[-1.0, 2.0]));
        let b = infeasibility(&eval_at("lin_biactive", &[-2.0, 4.0]));
        assert_relative_eq!(b.theta_f, 2.0 * a.theta_f);
        assert_relative_eq!(b.theta_c, 4.0 * a.theta_c);
    }

    #[test]
    fn active_sets_quad_branch() {
        let s = active_sets(&eval_at("quad_branch", &[1.0, 0.0]), 1e-6);
        assert!(s.gc.is_empty());
        assert_eq!(s.hc, vec![0]);
        assert!(s.biactive().is_empty());
    }

    #[test]
    fn active_sets_biactive_origin() {
        let s = active_sets(&eval_at("lin_biactive", &[0.0, 0.0]), 1e-6);
        assert_eq!(s.gc, vec![0]);
        assert_eq!(s.hc, vec![0]);
        assert_eq!(s.biactive(), vec![0]);
    }

    #[test]
    fn below_tolerance_counts_active() {
        let s = active_sets(&eval_at("lin_biactive", &[1e-9, 0.5]), 1e-6);
        assert_eq!(s.gc, vec![0]);
    }

    #[test]
    fn theta_zero_partitions_pairs() {
        // At a feasible point every pair has an active member.
        for x in [[0.0, 0.0], [0.7, 0.0], [0.0, 1.3]] {
            let e = eval_at("lin_biactive", &x);
            assert_eq!(infeasibility(&e).theta, 0.0);
            let s = active_sets(&e, 1e-12);
            assert!(!s.gc.is_empty() || !s.hc.is_empty());
            assert_eq!(
                s.gc.len() + s.hc.len() - s.biactive().len(),
                1,
                "pair must be covered exactly once at {x:?}"
            );
        }
    }
}
