//! `mpec` — solve and inspect mathematical programs with equilibrium
//! constraints.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mpec_funnel_cli::{exit_code, parse_point, run_check, run_gradcheck, run_solve, RunRequest};

#[derive(Parser)]
#[command(
    name = "mpec",
    about = "MPEC solver with a penalized composite-step method and trust-funnel line search",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem from the registry or a quadratic-MPEC JSON file.
    Solve {
        /// Registry name (see `--list`) or path to a problem document.
        #[arg(long)]
        problem: String,
        /// Starting point, comma-separated; defaults to the problem's own.
        #[arg(long)]
        x0: Option<String>,
        /// JSON config file; absent fields take documented defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the iteration trace CSV here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the structured result document here.
        #[arg(long)]
        result: Option<PathBuf>,
        /// Also print the trace to stdout.
        #[arg(short, long)]
        verbose: bool,
    },
    /// Verify gradients, classify stationarity and test MFCQ at a point.
    Check {
        #[arg(long)]
        problem: String,
        /// Point to check, comma-separated.
        #[arg(long)]
        point: String,
        /// Optional JSON file with multipliers (lambda, mu, nu_hat, xi_hat);
        /// estimated from the active constraints when absent.
        #[arg(long)]
        multipliers: Option<PathBuf>,
    },
    /// Compare analytic Jacobians against central finite differences.
    Gradcheck {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        point: String,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
        /// Relative-error tolerance.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Solve {
            problem,
            x0,
            config,
            trace,
            result,
            verbose,
        } => {
            let x0 = match x0.as_deref().map(parse_point).transpose() {
                Ok(v) => v,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(exit_code::INPUT_ERROR as u8);
                }
            };
            run_solve(&RunRequest {
                problem,
                x0,
                config,
                trace,
                result,
                verbose,
            })
        }
        Command::Check {
            problem,
            point,
            multipliers,
        } => match parse_point(&point) {
            Ok(p) => run_check(&problem, &p, multipliers.as_deref()),
            Err(e) => {
                eprintln!("error: {e}");
                exit_code::INPUT_ERROR
            }
        },
        Command::Gradcheck {
            problem,
            point,
            step,
            tol,
        } => match parse_point(&point) {
            Ok(p) => run_gradcheck(&problem, &p, step, tol),
            Err(e) => {
                eprintln!("error: {e}");
                exit_code::INPUT_ERROR
            }
        },
    };
    ExitCode::from(code as u8)
}
