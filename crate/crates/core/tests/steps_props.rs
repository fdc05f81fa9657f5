//! Step-computation properties: the complementarity-step identity on random
//! points, exactness of the near-null-space scaling and the penalty-loop
//! iteration bound.

use mpec_funnel::measures::infeasibility;
use mpec_funnel::model::{evaluate, registry_get, registry_names};
use mpec_funnel::steps::{
    complementarity_step, penalty_loop, u_min, Branch, PenaltyConfig, PenaltyLoopResult,
};
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

#[test]
fn complementarity_step_identity_on_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    for name in registry_names() {
        let p = registry_get(name).unwrap();
        let mut tested = 0usize;
        while tested < 100 {
            let x = DVector::from_fn(p.n(), |_, _| rng.random_range(-2.0..2.0));
            let e = evaluate(&p, &x).unwrap();
            if e.grad_q.norm() <= 1e-8 {
                continue;
            }
            let c = complementarity_step(&e);
            let lin = e.q + e.grad_q.dot(&c.s);
            assert!(
                lin.abs() <= 1e-10 * e.q.abs().max(1.0),
                "{name}: Q + grad Q' s = {lin} at {x:?}"
            );
            tested += 1;
        }
    }
}

/// A deliberately degenerate instance on which the tangential system
/// cannot approach the null space of `grad Q'`: the pair is `x perp x`
/// (feasible only at 0) while an inequality demands `x >= 1`, so the
/// linearized rows force a tangential component along `grad Q` that is
/// bounded away from zero and the near-null-space scaling must fire.
fn conflicting_fixture() -> mpec_funnel::model::MpecProblem {
    mpec_funnel::model::MpecProblem::builder("conflict", 1, 1)
        .objective(|x| x[0], |_| DVector::from_vec(vec![1.0]))
        .inequalities(
            1,
            |x| DVector::from_vec(vec![x[0] - 1.0]),
            |_| DMatrix::from_column_slice(1, 1, &[1.0]),
        )
        .complementarity(
            |x| DVector::from_vec(vec![x[0]]),
            |_| DMatrix::from_column_slice(1, 1, &[1.0]),
            |x| DVector::from_vec(vec![x[0]]),
            |_| DMatrix::from_column_slice(1, 1, &[1.0]),
        )
        .build()
        .unwrap()
}

/// Whenever the fallback fires, |grad Q' (gamma t)| = delta holds exactly
/// by construction of the scaling.
#[test]
fn scaling_is_exact_when_it_fires() {
    let cfg = PenaltyConfig::default();
    let p = conflicting_fixture();
    let mut fired = 0usize;

    for &x0 in &[0.3, 0.5, 0.7, 0.9] {
        let e = evaluate(&p, &DVector::from_vec(vec![x0])).unwrap();
        let comp = complementarity_step(&e);
        let theta = infeasibility(&e);
        let out = penalty_loop(
            &e,
            &comp,
            &DMatrix::identity(1, 1),
            &theta,
            (10.0 * theta.theta).max(1.0),
            1.0,
            1e-6,
            &cfg,
        )
        .unwrap();
        if let PenaltyLoopResult::Step(out) = out {
            if out.gamma < 1.0 {
                fired += 1;
                let scaled = e.grad_q.dot(&(&out.t_raw * out.gamma)).abs();
                assert!(
                    (scaled - out.delta).abs() <= 1e-12 * out.delta.max(1e-300),
                    "|grad Q' (gamma t)| = {scaled} vs delta = {}",
                    out.delta
                );
                // gamma is the exact ratio, clamped to one.
                let expected = (out.delta / out.grad_q_dot_t.abs()).min(1.0);
                assert_eq!(out.gamma, expected);
                // The accepted u dropped below the floor of its branch.
                assert!(out.u < u_min(out.delta, &cfg));
            }
        }
    }
    assert!(fired >= 3, "scaling fired only {fired} times");
}

#[test]
fn penalty_loop_iteration_bound() {
    // The loop halves u monotonically, so it can use at most
    // ceil(log2(u_start / u_floor)) + 1 solves, where u_floor is the
    // smaller of the two branch floors computable from (theta, theta_max).
    let cfg = PenaltyConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for name in registry_names() {
        let p = registry_get(name).unwrap();
        for _ in 0..25 {
            let x = DVector::from_fn(p.n(), |_, _| rng.random_range(-1.5..1.5));
            let e = evaluate(&p, &x).unwrap();
            let comp = complementarity_step(&e);
            let theta = infeasibility(&e);
            let theta_max = (10.0 * theta.theta).max(1.0);
            let out = penalty_loop(
                &e,
                &comp,
                &DMatrix::identity(p.n(), p.n()),
                &theta,
                theta_max,
                1.0,
                1e-6,
                &cfg,
            )
            .unwrap();
            if let PenaltyLoopResult::Step(out) = out {
                let delta_f = mpec_funnel::steps::delta(Branch::FStep, theta.theta, theta_max, &cfg);
                let delta_h = mpec_funnel::steps::delta(Branch::HStep, theta.theta, theta_max, &cfg);
                let floor = u_min(delta_f, &cfg).min(u_min(delta_h, &cfg));
                if floor > 0.0 {
                    let bound = (1.0_f64 / floor).log2().ceil() as usize + 1;
                    assert!(
                        out.solves <= bound,
                        "{name}: {} solves exceeds bound {bound} at {x:?}",
                        out.solves
                    );
                }
                // u was halved monotonically from the start value.
                let halvings = out.solves - 1;
                let expected_u = 1.0 / (1u64 << halvings) as f64;
                assert_eq!(out.u, expected_u);
            }
        }
    }
}
