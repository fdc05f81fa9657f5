//! Ingestion of quadratic MPECs from a JSON document.
//!
//! The schema is restricted to a quadratic objective `x'Px/2 + c'x` with
//! affine constraint maps so that all Jacobians are exact:
//!
//! ```json
//! {
//!   "name": "example",
//!   "n": 2,
//!   "objective": { "P": [[0.0, 0.0], [0.0, 0.0]], "c": [1.0, 1.0] },
//!   "g": { "A": [[...]], "b": [...] },
//!   "h": { "A": [[...]], "b": [...] },
//!   "G": { "A": [[1.0, 0.0]], "b": [0.0] },
//!   "H": { "A": [[0.0, 1.0]], "b": [0.0] },
//!   "x0": [1.0, 1.0]
//! }
//! ```
//!
//! Each affine block means `A x + b` with `A` given row-major; `g` encodes
//! `A x + b >= 0` and `h` encodes `A x + b = 0`. `g`, `h` and `x0` are
//! optional, the complementarity blocks are not.

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use super::MpecProblem;
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineDoc {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectiveDoc {
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
    c: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemDoc {
    #[serde(default)]
    name: Option<String>,
    n: usize,
    objective: ObjectiveDoc,
    #[serde(default)]
    g: Option<AffineDoc>,
    #[serde(default)]
    h: Option<AffineDoc>,
    #[serde(rename = "G")]
    gc: Option<AffineDoc>,
    #[serde(rename = "H")]
    hc: Option<AffineDoc>,
    #[serde(default)]
    x0: Option<Vec<f64>>,
}

/// Result of [`load_quadratic_mpec`]: the assembled problem plus loader
/// diagnostics.
#[derive(Debug)]
pub struct LoadedMpec {
    pub problem: MpecProblem,
    /// Set when the document's `P` was not symmetric and got replaced by
    /// `(P + P')/2`.
    pub p_symmetrized: bool,
}

fn dim_err(field: &str, expected: impl Into<String>, found: impl Into<String>) -> Error {
    Error::DimensionMismatch {
        field: field.into(),
        expected: expected.into(),
        found: found.into(),
    }
}

fn parse_matrix(rows: &[Vec<f64>], nrows: usize, ncols: usize, field: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nrows {
        return Err(dim_err(field, format!("{nrows} rows"), format!("{}", rows.len())));
    }
    let mut mat = DMatrix::zeros(nrows, ncols);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(dim_err(
                &format!("{field}[{i}]"),
                format!("{ncols} entries"),
                format!("{}", row.len()),
            ));
        }
        for (j, v) in row.iter().enumerate() {
            mat[(i, j)] = *v;
        }
    }
    Ok(mat)
}

struct AffineBlock {
    /// Row matrix `A` (k x n): the map is `A x + b`.
    a: DMatrix<f64>,
    b: DVector<f64>,
}

fn parse_affine(doc: &AffineDoc, n: usize, field: &str) -> Result<AffineBlock> {
    let k = doc.b.len();
    let a = parse_matrix(&doc.a, k, n, &format!("{field}.A"))?;
    Ok(AffineBlock {
        a,
        b: DVector::from_vec(doc.b.clone()),
    })
}

/// Parse a quadratic-MPEC document and assemble an [`MpecProblem`] with
/// analytic Jacobians built from the affine data.
pub fn load_quadratic_mpec(document: &str) -> Result<LoadedMpec> {
    let doc: ProblemDoc = serde_json::from_str(document).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let n = doc.n;
    if n == 0 {
        return Err(dim_err("n", ">= 1", "0"));
    }

    let gc_doc = doc.gc.ok_or_else(|| Error::Parse {
        line: 0,
        column: 0,
        message: "missing complementarity block G (an MPEC requires q >= 1)".into(),
    })?;
    let hc_doc = doc.hc.ok_or_else(|| Error::Parse {
        line: 0,
        column: 0,
        message: "missing complementarity block H (an MPEC requires q >= 1)".into(),
    })?;
    if gc_doc.b.is_empty() {
        return Err(Error::Parse {
            line: 0,
            column: 0,
            message: "empty complementarity block (an MPEC requires q >= 1)".into(),
        });
    }

    let p_raw = parse_matrix(&doc.objective.p, n, n, "objective.P")?;
    if doc.objective.c.len() != n {
        return Err(dim_err("objective.c", format!("{n}"), format!("{}", doc.objective.c.len())));
    }
    let c = DVector::from_vec(doc.objective.c.clone());

    let p_sym = (&p_raw + p_raw.transpose()) * 0.5;
    let p_symmetrized = (&p_raw - &p_sym).amax() > 0.0;

    let gc = parse_affine(&gc_doc, n, "G")?;
    let hc = parse_affine(&hc_doc, n, "H")?;
    let q = gc.b.len();
    if hc.b.len() != q {
        return Err(dim_err("H", format!("{q} rows to match G"), format!("{}", hc.b.len())));
    }

    let g = doc.g.as_ref().map(|d| parse_affine(d, n, "g")).transpose()?;
    let h = doc.h.as_ref().map(|d| parse_affine(d, n, "h")).transpose()?;
    let m = g.as_ref().map_or(0, |b| b.b.len());
    let p_eq = h.as_ref().map_or(0, |b| b.b.len());

    let x0 = match doc.x0 {
        Some(v) if v.len() == n => Some(DVector::from_vec(v)),
        Some(v) => return Err(dim_err("x0", format!("{n}"), format!("{}", v.len()))),
        None => None,
    };

    let name = doc.name.unwrap_or_else(|| "quadratic_mpec".to_string());

    let mut builder = MpecProblem::builder(name, n, q).objective(
        {
            let p_sym = p_sym.clone();
            let c = c.clone();
            move |x: &DVector<f64>| 0.5 * (x.transpose() * &p_sym * x)[(0, 0)] + c.dot(x)
        },
        move |x: &DVector<f64>| &p_sym * x + &c,
    );

    // Affine map A x + b evaluates directly; its Jacobian is the constant A'.
    let affine_pair = |blk: AffineBlock| {
        let a_eval = blk.a.clone();
        let at = blk.a.transpose();
        let b = blk.b;
        (
            move |x: &DVector<f64>| &a_eval * x + &b,
            move |_x: &DVector<f64>| at.clone(),
        )
    };

    let (gc_f, gc_j) = affine_pair(gc);
    let (hc_f, hc_j) = affine_pair(hc);
    builder = builder.complementarity(gc_f, gc_j, hc_f, hc_j);

    if let Some(blk) = g {
        let (f, j) = affine_pair(blk);
        builder = builder.inequalities(m, f, j);
    }
    if let Some(blk) = h {
        let (f, j) = affine_pair(blk);
        builder = builder.equalities(p_eq, f, j);
    }
    if let Some(x0) = x0 {
        builder = builder.start(x0);
    }

    Ok(LoadedMpec {
        problem: builder.build()?,
        p_symmetrized,
    })
}
