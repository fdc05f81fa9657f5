//! Model-level invariants: gradient checks on random points, the identity
//! between `grad Q` and finite differences of `Q`, and agreement between
//! document-loaded problems and their registry twins.

use mpec_funnel::model::{check_gradients, evaluate, load_quadratic_mpec, registry_get, registry_names};
use mpec_funnel_testkit::fd_gradient;
use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn random_point(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0))
}

#[test]
fn gradcheck_passes_on_random_points_for_every_builtin() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for name in registry_names() {
        let p = registry_get(name).unwrap();
        for _ in 0..20 {
            let x = random_point(&mut rng, p.n());
            let r = check_gradients(&p, &x, 1e-6, 1e-6).unwrap();
            assert!(r.pass, "{name} fails gradcheck at {x:?}: {r:?}");
        }
    }
}

#[test]
fn grad_q_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for name in registry_names() {
        let p = registry_get(name).unwrap();
        for _ in 0..10 {
            let x = random_point(&mut rng, p.n());
            let e = evaluate(&p, &x).unwrap();
            let fd = fd_gradient(|y| evaluate(&p, y).unwrap().q, &x, 1e-6);
            for j in 0..p.n() {
                let denom = e.grad_q[j].abs().max(1.0);
                assert!(
                    (fd[j] - e.grad_q[j]).abs() / denom <= 1e-6,
                    "{name}: grad Q mismatch at {x:?} component {j}"
                );
            }
        }
    }
}

/// Quadratic-MPEC documents encoding the registry fixtures.
fn document_for(name: &str) -> String {
    match name {
        "lin_biactive" => r#"{
            "name": "lin_biactive", "n": 2,
            "objective": { "P": [[0,0],[0,0]], "c": [1,1] },
            "G": { "A": [[1,0]], "b": [0] },
            "H": { "A": [[0,1]], "b": [0] }
        }"#
        .into(),
        "quad_branch" => r#"{
            "name": "quad_branch", "n": 2,
            "objective": { "P": [[2,0],[0,2]], "c": [-2,-2] },
            "G": { "A": [[1,0]], "b": [0] },
            "H": { "A": [[0,1]], "b": [0] }
        }"#
        .into(),
        "mixed_eq" => r#"{
            "name": "mixed_eq", "n": 2,
            "objective": { "P": [[2,0],[0,2]], "c": [-4,-2] },
            "h": { "A": [[1,1]], "b": [-1] },
            "G": { "A": [[1,0]], "b": [0] },
            "H": { "A": [[0,1]], "b": [0] }
        }"#
        .into(),
        "cstat_fixture" => r#"{
            "name": "cstat_fixture", "n": 2,
            "objective": { "P": [[1,0],[0,1]], "c": [-1,-1] },
            "G": { "A": [[1,0]], "b": [0] },
            "H": { "A": [[0,1]], "b": [0] }
        }"#
        .into(),
        "ineq_budget" => r#"{
            "name": "ineq_budget", "n": 2,
            "objective": { "P": [[2,0],[0,2]], "c": [-2,-2] },
            "g": { "A": [[-1,-1]], "b": [0.8] },
            "G": { "A": [[1,0]], "b": [0] },
            "H": { "A": [[0,1]], "b": [0] }
        }"#
        .into(),
        other => panic!("no document for {other}"),
    }
}

#[test]
fn loaded_documents_agree_with_registry_twins() {
    // The quadratic forms drop the constant term of the fixtures'
    // objectives, so agreement is checked up to the constant measured at
    // one reference point.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for name in registry_names() {
        let registry = registry_get(name).unwrap();
        let loaded = load_quadratic_mpec(&document_for(name)).unwrap();
        assert!(!loaded.p_symmetrized);
        let twin = loaded.problem;
        let origin = DVector::zeros(registry.n());
        let f_shift =
            evaluate(&registry, &origin).unwrap().f - evaluate(&twin, &origin).unwrap().f;

        for _ in 0..50 {
            let x = random_point(&mut rng, registry.n());
            let a = evaluate(&registry, &x).unwrap();
            let b = evaluate(&twin, &x).unwrap();
            assert!(((a.f - f_shift) - b.f).abs() <= 1e-12 * a.f.abs().max(1.0));
            assert!((a.q - b.q).abs() <= 1e-12 * a.q.abs().max(1.0));
            assert!((&a.grad_f - &b.grad_f).amax() <= 1e-12);
            assert!((&a.grad_q - &b.grad_q).amax() <= 1e-12);
            assert!((&a.g - &b.g).amax() <= 1e-12);
            assert!((&a.h - &b.h).amax() <= 1e-12);
            assert!((&a.gc - &b.gc).amax() <= 1e-12);
            assert!((&a.hc - &b.hc).amax() <= 1e-12);
        }
    }
}
