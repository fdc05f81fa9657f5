//! Brute-force oracles for the test suites.
//!
//! Everything here is deliberately independent of the solver crate: plain
//! enumeration plus dense linear algebra, so test expectations never share a
//! code path with the implementation they check.

use nalgebra::{DMatrix, DVector};

/// A quadratic program `min x'Px/2 + c'x` with `A_eq x = b_eq`,
/// `A_in x >= b_in`.
#[derive(Debug, Clone)]
pub struct OracleQp {
    pub p: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
}

/// Outcome of the enumeration oracle.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    /// Subset of inequality rows treated as equalities in the winning
    /// candidate.
    pub active: Vec<usize>,
}

fn objective(qp: &OracleQp, x: &DVector<f64>) -> f64 {
    0.5 * (x.transpose() * &qp.p * x)[(0, 0)] + qp.c.dot(x)
}

/// Solve a convex QP by enumerating every candidate active set: each subset
/// of inequality rows is treated as equalities, the resulting KKT system is
/// solved by least squares, and a candidate counts when the full KKT
/// residual is tiny and the remaining inequalities hold. The minimum
/// objective over accepted candidates is the solution. Exponential in the
/// number of inequalities; intended for tiny problems only.
pub fn solve_qp_oracle(qp: &OracleQp, tol: f64) -> Option<OracleSolution> {
    let n = qp.c.len();
    let m = qp.a_in.nrows();
    assert!(m <= 20, "oracle enumeration limited to 20 inequalities");

    let mut best: Option<OracleSolution> = None;
    for mask in 0u32..(1u32 << m) {
        let subset: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let rows = qp.a_eq.nrows() + subset.len();

        // KKT system: [P A'; A 0] [x; lam] = [-c; b].
        let dim = n + rows;
        let mut kkt = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.p);
        for i in 0..n {
            rhs[i] = -qp.c[i];
        }
        for r in 0..rows {
            let (a_row, b_val) = if r < qp.a_eq.nrows() {
                (qp.a_eq.row(r).clone_owned(), qp.b_eq[r])
            } else {
                let i = subset[r - qp.a_eq.nrows()];
                (qp.a_in.row(i).clone_owned(), qp.b_in[i])
            };
            for j in 0..n {
                kkt[(n + r, j)] = a_row[j];
                kkt[(j, n + r)] = a_row[j];
            }
            rhs[n + r] = b_val;
        }

        let sol = match kkt.clone().svd(true, true).solve(&rhs, 1e-12) {
            Ok(s) => s,
            Err(_) => continue,
        };
        // Reject inconsistent systems.
        if (kkt * &sol - &rhs).amax() > tol {
            continue;
        }
        let x = DVector::from_iterator(n, (0..n).map(|i| sol[i]));
        if !x.iter().all(|v| v.is_finite()) {
            continue;
        }
        // Primal feasibility of the rows not in the subset.
        let feasible = (0..m).all(|i| {
            subset.contains(&i) || (qp.a_in.row(i) * &x)[(0, 0)] >= qp.b_in[i] - tol
        });
        if !feasible {
            continue;
        }
        let obj = objective(qp, &x);
        if best.as_ref().map_or(true, |b| obj < b.objective) {
            best = Some(OracleSolution {
                x,
                objective: obj,
                active: subset,
            });
        }
    }
    best
}

/// A quadratic MPEC in affine form: objective `x'Px/2 + c'x`, inequalities
/// `Ag x + bg >= 0`, equalities `Ah x + bh = 0` and the complementarity
/// pair `AG x + bG >= 0  perp  AH x + bH >= 0`.
#[derive(Debug, Clone)]
pub struct QuadraticMpec {
    pub p: DMatrix<f64>,
    pub c: DVector<f64>,
    pub ag: DMatrix<f64>,
    pub bg: DVector<f64>,
    pub ah: DMatrix<f64>,
    pub bh: DVector<f64>,
    pub agc: DMatrix<f64>,
    pub bgc: DVector<f64>,
    pub ahc: DMatrix<f64>,
    pub bhc: DVector<f64>,
}

/// A branch minimizer found by enumeration.
#[derive(Debug, Clone)]
pub struct BranchSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    /// For each pair, true when the G side was pinned to zero.
    pub g_side: Vec<bool>,
}

/// Global solutions of a quadratic MPEC by complementarity-branch
/// enumeration: every assignment of "G_i = 0" or "H_i = 0" yields a convex
/// QP handed to [`solve_qp_oracle`]; the minimizers within `tol` of the best
/// branch objective are returned, deduplicated.
pub fn solve_mpec_oracle(mpec: &QuadraticMpec, tol: f64) -> Vec<BranchSolution> {
    let n = mpec.c.len();
    let q = mpec.bgc.len();
    let m = mpec.bg.len();
    assert!(q <= 10, "oracle enumeration limited to 10 pairs");

    let mut candidates: Vec<BranchSolution> = Vec::new();
    for mask in 0u32..(1u32 << q) {
        let g_side: Vec<bool> = (0..q).map(|i| mask & (1 << i) != 0).collect();

        // Equalities: h rows plus the pinned side of each pair.
        let eq_rows = mpec.bh.len() + q;
        let mut a_eq = DMatrix::zeros(eq_rows, n);
        let mut b_eq = DVector::zeros(eq_rows);
        for r in 0..mpec.bh.len() {
            a_eq.row_mut(r).copy_from(&mpec.ah.row(r));
            b_eq[r] = -mpec.bh[r];
        }
        for i in 0..q {
            let r = mpec.bh.len() + i;
            if g_side[i] {
                a_eq.row_mut(r).copy_from(&mpec.agc.row(i));
                b_eq[r] = -mpec.bgc[i];
            } else {
                a_eq.row_mut(r).copy_from(&mpec.ahc.row(i));
                b_eq[r] = -mpec.bhc[i];
            }
        }

        // Inequalities: g rows plus the free side of each pair.
        let in_rows = m + q;
        let mut a_in = DMatrix::zeros(in_rows, n);
        let mut b_in = DVector::zeros(in_rows);
        for r in 0..m {
            a_in.row_mut(r).copy_from(&mpec.ag.row(r));
            b_in[r] = -mpec.bg[r];
        }
        for i in 0..q {
            let r = m + i;
            if g_side[i] {
                a_in.row_mut(r).copy_from(&mpec.ahc.row(i));
                b_in[r] = -mpec.bhc[i];
            } else {
                a_in.row_mut(r).copy_from(&mpec.agc.row(i));
                b_in[r] = -mpec.bgc[i];
            }
        }

        let qp = OracleQp {
            p: mpec.p.clone(),
            c: mpec.c.clone(),
            a_eq,
            b_eq,
            a_in,
            b_in,
        };
        if let Some(sol) = solve_qp_oracle(&qp, 1e-9) {
            candidates.push(BranchSolution {
                x: sol.x,
                objective: sol.objective,
                g_side,
            });
        }
    }

    let best = candidates
        .iter()
        .map(|s| s.objective)
        .fold(f64::INFINITY, f64::min);
    let mut winners: Vec<BranchSolution> = Vec::new();
    for s in candidates {
        if s.objective <= best + tol
            && !winners.iter().any(|w| (&w.x - &s.x).amax() <= 1e-7)
        {
            winners.push(s);
        }
    }
    winners
}

/// Central finite-difference gradient of a scalar function.
pub fn fd_gradient<F>(f: F, x: &DVector<f64>, step: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let n = x.len();
    let mut grad = DVector::zeros(n);
    for j in 0..n {
        let mut xp = x.clone();
        xp[j] += step;
        let mut xm = x.clone();
        xm[j] -= step;
        grad[j] = (f(&xp) - f(&xm)) / (2.0 * step);
    }
    grad
}

/// Affine-form twins of the built-in fixtures, stated independently from
/// their registry definitions.
pub fn fixture(name: &str) -> QuadraticMpec {
    let pair_x1_x2 = || {
        (
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DVector::zeros(1),
            DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            DVector::zeros(1),
        )
    };
    let empty = |n: usize| (DMatrix::zeros(0, n), DVector::zeros(0));

    match name {
        // min x1 + x2
        "lin_biactive" => {
            let (agc, bgc, ahc, bhc) = pair_x1_x2();
            let (ag, bg) = empty(2);
            let (ah, bh) = empty(2);
            QuadraticMpec {
                p: DMatrix::zeros(2, 2),
                c: DVector::from_vec(vec![1.0, 1.0]),
                ag,
                bg,
                ah,
                bh,
                agc,
                bgc,
                ahc,
                bhc,
            }
        }
        // min (x1-1)^2 + (x2-1)^2 = x'Ix - 2x + 2 up to a constant
        "quad_branch" => {
            let (agc, bgc, ahc, bhc) = pair_x1_x2();
            let (ag, bg) = empty(2);
            let (ah, bh) = empty(2);
            QuadraticMpec {
                p: DMatrix::identity(2, 2) * 2.0,
                c: DVector::from_vec(vec![-2.0, -2.0]),
                ag,
                bg,
                ah,
                bh,
                agc,
                bgc,
                ahc,
                bhc,
            }
        }
        // min (x1-2)^2 + (x2-1)^2 with x1 + x2 - 1 = 0
        "mixed_eq" => {
            let (agc, bgc, ahc, bhc) = pair_x1_x2();
            let (ag, bg) = empty(2);
            QuadraticMpec {
                p: DMatrix::identity(2, 2) * 2.0,
                c: DVector::from_vec(vec![-4.0, -2.0]),
                ag,
                bg,
                ah: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
                bh: DVector::from_vec(vec![-1.0]),
                agc,
                bgc,
                ahc,
                bhc,
            }
        }
        // min (x1^2 + x2^2)/2 - x1 - x2
        "cstat_fixture" => {
            let (agc, bgc, ahc, bhc) = pair_x1_x2();
            let (ag, bg) = empty(2);
            let (ah, bh) = empty(2);
            QuadraticMpec {
                p: DMatrix::identity(2, 2),
                c: DVector::from_vec(vec![-1.0, -1.0]),
                ag,
                bg,
                ah,
                bh,
                agc,
                bgc,
                ahc,
                bhc,
            }
        }
        // min (x1-1)^2 + (x2-1)^2 with 0.8 - x1 - x2 >= 0
        "ineq_budget" => {
            let (agc, bgc, ahc, bhc) = pair_x1_x2();
            let (ah, bh) = empty(2);
            QuadraticMpec {
                p: DMatrix::identity(2, 2) * 2.0,
                c: DVector::from_vec(vec![-2.0, -2.0]),
                ag: DMatrix::from_row_slice(1, 2, &[-1.0, -1.0]),
                bg: DVector::from_vec(vec![0.8]),
                ah,
                bh,
                agc,
                bgc,
                ahc,
                bhc,
            }
        }
        other => panic!("no oracle fixture named {other}"),
    }
}

/// The objective of [`fixture`] problems evaluated directly, including the
/// constant term dropped from the quadratic form.
pub fn fixture_objective(name: &str, x: &DVector<f64>) -> f64 {
    match name {
        "lin_biactive" => x[0] + x[1],
        "quad_branch" => (x[0] - 1.0).powi(2) + (x[1] - 1.0).powi(2),
        "mixed_eq" => (x[0] - 2.0).powi(2) + (x[1] - 1.0).powi(2),
        "cstat_fixture" => 0.5 * (x[0] * x[0] + x[1] * x[1]) - x[0] - x[1],
        "ineq_budget" => (x[0] - 1.0).powi(2) + (x[1] - 1.0).powi(2),
        other => panic!("no oracle fixture named {other}"),
    }
}
