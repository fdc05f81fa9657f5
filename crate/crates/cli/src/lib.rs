//! Front-end plumbing shared by the `mpec` binary and its tests: problem
//! resolution, config and multiplier files, trace CSV emission and the
//! subcommand drivers.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use serde::Deserialize;

use mpec_funnel::error::Error;
use mpec_funnel::funnel::{SolveResult, SolverConfig, StepKind, TraceRecord};
use mpec_funnel::model::{load_quadratic_mpec, registry_get, registry_names, MpecProblem};
use mpec_funnel::stationarity::{
    classify, estimate_multipliers, mfcq_diagnostic, ClassifyOptions, MpecMultipliers, StatClass,
};
use mpec_funnel::{check_gradients, evaluate, infeasibility, solve, Status};

/// Exit codes of the front end.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    /// A check ran but did not certify everything it tested.
    pub const CHECK_FAILED: i32 = 1;
    pub const MAX_ITERATIONS: i32 = 2;
    pub const RESTORATION_FAILURE: i32 = 3;
    pub const INPUT_ERROR: i32 = 4;
    pub const DEGENERATE: i32 = 5;
}

/// A fully resolved `solve` invocation.
#[derive(Debug, Clone)]
pub struct RunRequest {
    /// Registry name or path of a problem document.
    pub problem: String,
    pub x0: Option<Vec<f64>>,
    pub config: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub result: Option<PathBuf>,
    pub verbose: bool,
}

/// Resolve a problem source: registry names win, then the filesystem.
pub fn resolve_problem(source: &str) -> Result<MpecProblem, Error> {
    match registry_get(source) {
        Ok(p) => Ok(p),
        Err(Error::UnknownProblem(_)) => {
            let path = Path::new(source);
            if path.exists() {
                let text = fs::read_to_string(path)?;
                Ok(load_quadratic_mpec(&text)?.problem)
            } else {
                Err(Error::UnknownProblem(format!(
                    "{source} (not a registry name — {} — and not a file)",
                    registry_names().join(", ")
                )))
            }
        }
        Err(e) => Err(e),
    }
}

/// Load a solver configuration file (JSON mirroring the config field
/// names); absent fields take their defaults.
pub fn load_config(path: Option<&Path>) -> Result<SolverConfig, Error> {
    let cfg = match path {
        None => SolverConfig::default(),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Parse a comma-separated point like `1,0.5,-2e-3`.
pub fn parse_point(text: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(|tok| {
            tok.trim().parse::<f64>().map_err(|e| Error::Parse {
                line: 0,
                column: 0,
                message: format!("bad coordinate {tok:?}: {e}"),
            })
        })
        .collect()
}

#[derive(Debug, Deserialize)]
struct MultiplierDoc {
    #[serde(default)]
    lambda: Vec<f64>,
    #[serde(default)]
    mu: Vec<f64>,
    nu_hat: Vec<f64>,
    xi_hat: Vec<f64>,
    #[serde(default)]
    eta: f64,
}

/// Load MPEC multipliers from a JSON document with fields `lambda`, `mu`,
/// `nu_hat`, `xi_hat` and optional `eta`.
pub fn load_multipliers(path: &Path, m: usize, p: usize, q: usize) -> Result<MpecMultipliers, Error> {
    let text = fs::read_to_string(path)?;
    let doc: MultiplierDoc = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let want = |name: &str, len: usize, expected: usize| -> Result<(), Error> {
        if len == expected {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                field: name.into(),
                expected: expected.to_string(),
                found: len.to_string(),
            })
        }
    };
    want("lambda", doc.lambda.len(), m)?;
    want("mu", doc.mu.len(), p)?;
    want("nu_hat", doc.nu_hat.len(), q)?;
    want("xi_hat", doc.xi_hat.len(), q)?;
    let nu_hat = DVector::from_vec(doc.nu_hat);
    let xi_hat = DVector::from_vec(doc.xi_hat);
    Ok(MpecMultipliers {
        lambda: DVector::from_vec(doc.lambda),
        mu: DVector::from_vec(doc.mu),
        nu: nu_hat.clone(),
        xi: xi_hat.clone(),
        eta: doc.eta,
        nu_hat,
        xi_hat,
    })
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Trace CSV header, fixed column order.
pub const TRACE_HEADER: &str =
    "k,kind,theta_f,theta_c,theta,theta_max,f,alpha,u,norm_s,norm_t,gamma,qp_iters,stat_res";

/// Render trace records as CSV with 17 significant digits.
pub fn trace_to_csv(records: &[TraceRecord]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.k,
            r.kind,
            fmt(r.theta_f),
            fmt(r.theta_c),
            fmt(r.theta),
            fmt(r.theta_max),
            fmt(r.f),
            fmt(r.alpha),
            fmt(r.u),
            fmt(r.norm_s),
            fmt(r.norm_t),
            fmt(r.gamma),
            r.qp_iters,
            fmt(r.stat_res),
        ));
    }
    out
}

/// Write the trace CSV to a file.
pub fn emit_trace(records: &[TraceRecord], path: &Path) -> Result<(), Error> {
    fs::write(path, trace_to_csv(records))?;
    Ok(())
}

/// Parse a trace CSV produced by [`emit_trace`].
pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, Error> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != TRACE_HEADER {
        return Err(Error::Parse {
            line: 1,
            column: 0,
            message: format!("unexpected trace header {header:?}"),
        });
    }
    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 14 {
            return Err(Error::Parse {
                line: idx + 2,
                column: 0,
                message: format!("expected 14 columns, found {}", cols.len()),
            });
        }
        let num = |i: usize| -> Result<f64, Error> {
            cols[i].parse::<f64>().map_err(|e| Error::Parse {
                line: idx + 2,
                column: i,
                message: e.to_string(),
            })
        };
        let kind = match cols[1] {
            "F" => StepKind::F,
            "H" => StepKind::H,
            "R" => StepKind::Restoration,
            other => {
                return Err(Error::Parse {
                    line: idx + 2,
                    column: 1,
                    message: format!("unknown step kind {other:?}"),
                })
            }
        };
        records.push(TraceRecord {
            k: cols[0].parse().map_err(|_| Error::Parse {
                line: idx + 2,
                column: 0,
                message: "bad iteration index".into(),
            })?,
            kind,
            theta_f: num(2)?,
            theta_c: num(3)?,
            theta: num(4)?,
            theta_max: num(5)?,
            f: num(6)?,
            alpha: num(7)?,
            u: num(8)?,
            norm_s: num(9)?,
            norm_t: num(10)?,
            gamma: num(11)?,
            qp_iters: cols[12].parse().map_err(|_| Error::Parse {
                line: idx + 2,
                column: 12,
                message: "bad qp_iters".into(),
            })?,
            stat_res: num(13)?,
        });
    }
    Ok(records)
}

/// Render the structured result document.
pub fn result_to_json(result: &SolveResult, wall_ms: f64) -> String {
    let mut doc = serde_json::Map::new();
    doc.insert("status".into(), result.status.to_string().into());
    doc.insert(
        "x".into(),
        result.x.iter().copied().collect::<Vec<f64>>().into(),
    );
    doc.insert("f".into(), result.f.into());
    doc.insert("iterations".into(), result.iterations.into());
    if let Some(m) = &result.multipliers {
        let vecjson = |v: &DVector<f64>| -> serde_json::Value {
            v.iter().copied().collect::<Vec<f64>>().into()
        };
        let mut mm = serde_json::Map::new();
        mm.insert("lambda".into(), vecjson(&m.lambda));
        mm.insert("mu".into(), vecjson(&m.mu));
        mm.insert("nu_hat".into(), vecjson(&m.nu_hat));
        mm.insert("xi_hat".into(), vecjson(&m.xi_hat));
        mm.insert("eta".into(), m.eta.into());
        doc.insert("multipliers".into(), mm.into());
    }
    if let Some(s) = &result.stationarity {
        doc.insert("class".into(), s.class.to_string().into());
        doc.insert("stationarity_residual".into(), s.kkt_residual.into());
    }
    doc.insert("wall_time_ms".into(), wall_ms.into());
    serde_json::to_string_pretty(&serde_json::Value::Object(doc)).expect("result serialization")
}

fn status_code(status: Status) -> i32 {
    match status {
        Status::SStationaryPoint => exit_code::SUCCESS,
        Status::MaxIterations => exit_code::MAX_ITERATIONS,
        Status::RestorationFailure => exit_code::RESTORATION_FAILURE,
        Status::Degenerate => exit_code::DEGENERATE,
    }
}

fn input_error(e: &Error) -> i32 {
    eprintln!("error: {e}");
    exit_code::INPUT_ERROR
}

/// Run a solve and write the requested artifacts. Returns the process exit
/// code.
pub fn run_solve(request: &RunRequest) -> i32 {
    let problem = match resolve_problem(&request.problem) {
        Ok(p) => p,
        Err(e) => return input_error(&e),
    };
    let cfg = match load_config(request.config.as_deref()) {
        Ok(c) => c,
        Err(e) => return input_error(&e),
    };
    let x0 = match &request.x0 {
        Some(v) if v.len() == problem.n() => DVector::from_vec(v.clone()),
        Some(v) => {
            return input_error(&Error::DimensionMismatch {
                field: "x0".into(),
                expected: problem.n().to_string(),
                found: v.len().to_string(),
            })
        }
        None => match problem.x0() {
            Some(v) => v.clone(),
            None => DVector::zeros(problem.n()),
        },
    };

    let started = Instant::now();
    let result = match solve(&problem, &x0, &cfg) {
        Ok(r) => r,
        Err(e) => return input_error(&e),
    };
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;

    if request.verbose {
        print!("{}", trace_to_csv(&result.trace));
    }
    println!(
        "{}: status {}, f = {:.9e}, iterations {}{}",
        problem.name(),
        result.status,
        result.f,
        result.iterations,
        result
            .stationarity
            .as_ref()
            .map(|s| format!(", class {}", s.class))
            .unwrap_or_default()
    );

    if let Some(path) = &request.trace {
        if let Err(e) = emit_trace(&result.trace, path) {
            return input_error(&e);
        }
    }
    if let Some(path) = &request.result {
        if let Err(e) = fs::write(path, result_to_json(&result, wall_ms)) {
            return input_error(&e.into());
        }
    }
    status_code(result.status)
}

/// Check a point: gradient verification, stationarity classification and
/// the constraint-qualification diagnostic. Exit 0 only when all three
/// pass (class S, gradients within tolerance, MFCQ holds).
pub fn run_check(problem_src: &str, point: &[f64], multipliers: Option<&Path>) -> i32 {
    let problem = match resolve_problem(problem_src) {
        Ok(p) => p,
        Err(e) => return input_error(&e),
    };
    if point.len() != problem.n() {
        return input_error(&Error::DimensionMismatch {
            field: "point".into(),
            expected: problem.n().to_string(),
            found: point.len().to_string(),
        });
    }
    let x = DVector::from_vec(point.to_vec());
    let eval = match evaluate(&problem, &x) {
        Ok(e) => e,
        Err(e) => return input_error(&e),
    };

    let grad_report = match check_gradients(&problem, &x, 1e-6, 1e-6) {
        Ok(r) => r,
        Err(e) => return input_error(&e),
    };
    println!(
        "gradients: worst relative error {:.3e} (step {:.1e}) -> {}",
        grad_report.worst(),
        grad_report.step,
        if grad_report.pass { "pass" } else { "FAIL" }
    );

    let opts = ClassifyOptions::default();
    let mult = match multipliers {
        Some(path) => match load_multipliers(path, problem.m(), problem.p(), problem.q()) {
            Ok(m) => m,
            Err(e) => return input_error(&e),
        },
        None => match estimate_multipliers(&eval, &opts) {
            Ok(m) => m,
            Err(e) => return input_error(&e),
        },
    };
    let report = classify(&eval, &mult, &opts);
    let theta = infeasibility(&eval);
    println!(
        "stationarity: class {}, residual {:.3e}, theta {:.3e}{}",
        report.class,
        report.kkt_residual,
        theta.theta,
        report
            .reason
            .as_ref()
            .map(|r| format!(" ({r})"))
            .unwrap_or_default()
    );
    for (i, nu, xi) in &report.biactive {
        println!("  biactive pair {i}: nu_hat = {nu:.6e}, xi_hat = {xi:.6e}");
    }

    let mfcq = match mfcq_diagnostic(&eval, opts.activity_tol) {
        Ok(r) => r,
        Err(e) => return input_error(&e),
    };
    println!(
        "mfcq: {} (rank test {}, margin {:.3e}{})",
        if mfcq.holds { "holds" } else { "FAILS" },
        if mfcq.rank_ok { "ok" } else { "failed" },
        mfcq.margin,
        if mfcq.vacuous { ", vacuous" } else { "" }
    );

    if grad_report.pass && report.class == StatClass::SStationary && mfcq.holds {
        exit_code::SUCCESS
    } else {
        exit_code::CHECK_FAILED
    }
}

/// Gradient verification alone.
pub fn run_gradcheck(problem_src: &str, point: &[f64], step: f64, tol: f64) -> i32 {
    let problem = match resolve_problem(problem_src) {
        Ok(p) => p,
        Err(e) => return input_error(&e),
    };
    if point.len() != problem.n() {
        return input_error(&Error::DimensionMismatch {
            field: "point".into(),
            expected: problem.n().to_string(),
            found: point.len().to_string(),
        });
    }
    let x = DVector::from_vec(point.to_vec());
    let report = match check_gradients(&problem, &x, step, tol) {
        Ok(r) => r,
        Err(e) => return input_error(&e),
    };
    println!(
        "grad_f {:.3e}  jac_g {:.3e}  jac_h {:.3e}  jac_G {:.3e}  jac_H {:.3e}",
        report.grad_f, report.jac_g, report.jac_h, report.jac_gc, report.jac_hc
    );
    println!(
        "worst {:.3e} at step {:.1e}, tolerance {:.1e}: {}",
        report.worst(),
        report.step,
        report.tol,
        if report.pass { "pass" } else { "FAIL" }
    );
    if report.pass {
        exit_code::SUCCESS
    } else {
        exit_code::CHECK_FAILED
    }
}
