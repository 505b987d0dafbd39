//! Command-line front end: config files, the `run`, `verify` and `oracle`
//! subcommands, and the artifacts they write.

pub mod artifacts;
pub mod config;
pub mod svg;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{CommandFactory, Parser, Subcommand};
use log::{info, warn};

use crate::error::{Error, Result};
use crate::integrate::{Grid, DEFAULT_NODES};
use crate::optimize::optimize;
use crate::spectral::{
    analytic_oracle, eigen_solve, orthogonality_check, verify_design, BoreProfile, OracleKind,
};

pub use artifacts::{emit_artifacts, ArtifactSet, RunReport};
pub use config::{load_config, ProblemConfig};

/// Log level variable read by [`init_logging`].
pub const LOG_ENV: &str = "HORNOPT_LOG";

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "hornopt",
    version,
    about = "Design horn bores with prescribed resonances"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize a bore and write CSV, SVG and JSON artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `optimize.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the spectrum of the bore in a duct.csv.
    Verify {
        #[arg(long)]
        duct: PathBuf,
        #[arg(long)]
        modes: usize,
    },
    /// Print an analytic cylinder or cone mode as CSV.
    Oracle {
        #[arg(long)]
        kind: OracleKind,
        /// One-based mode index.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.772)]
        length: f64,
        #[arg(long, default_value_t = DEFAULT_NODES)]
        m: usize,
    },
}

/// Sets up `env_logger` from `HORNOPT_LOG` (default `warn`).
pub fn init_logging() {
    let level = match std::env::var(LOG_ENV) {
        Ok(v) => match v.trim().to_ascii_lowercase().as_str() {
            l @ ("error" | "warn" | "info" | "debug") => l.to_string(),
            other => {
                eprintln!("{LOG_ENV}={other} not recognised, using warn");
                "warn".into()
            }
        },
        Err(_) => "warn".into(),
    };
    let _ = env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp(None)
        .try_init();
}

/// Outcome of `hornopt run`.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub exit_code: i32,
    pub line: String,
    pub artifacts: ArtifactSet,
}

/// Optimizes, verifies the spectrum and writes artifacts to
/// `config.output_dir`.
pub fn run(config: &ProblemConfig) -> Result<RunSummary> {
    let problem = config.problem()?;
    let result = optimize(&problem, &config.opt_config())?;
    let spectral = match verify_design(&result.trajectory, config.harmonics.wave_numbers()) {
        Ok(v) => Some(v),
        Err(e) => {
            warn!("spectral verification skipped: {e}");
            None
        }
    };
    let artifacts = emit_artifacts(&result, config, spectral, &config.output_dir)?;
    let max_residual = result
        .report
        .terminal_residuals
        .iter()
        .fold(0.0_f64, |a, r| a.max(r.abs()));
    let line = format!(
        "J={:.6e} E={:.6e} iterations={} validity={:.4} max_residual={:.3e} converged={} -> {}",
        result.report.penalized,
        result.report.energy,
        result.iterations,
        result.validity,
        max_residual,
        result.converged,
        config.output_dir.display()
    );
    Ok(RunSummary {
        exit_code: if result.converged {
            EXIT_CONVERGED
        } else {
            EXIT_NOT_CONVERGED
        },
        line,
        artifacts,
    })
}

/// Spectrum of the bore stored in a `duct.csv`, written as CSV rows
/// `n,k,lambda,interior_zeros`. Returns the worst orthogonality defect.
pub fn verify(duct: &std::path::Path, modes: usize, out: &mut impl Write) -> Result<f64> {
    let (xs, ds) = artifacts::read_duct_csv(duct)?;
    let m = xs.len();
    if m < 3 {
        return Err(Error::Parse(format!(
            "{}: need at least 3 rows",
            duct.display()
        )));
    }
    let length = xs[m - 1];
    let grid = Grid::new(m, length)?;
    let h = grid.step();
    if xs[0] != 0.0
        || xs
            .iter()
            .enumerate()
            .any(|(i, &x)| (x - grid.node(i)).abs() > 1e-6 * h)
    {
        return Err(Error::Parse(format!(
            "{}: x must be a uniform grid starting at 0",
            duct.display()
        )));
    }
    let profile = BoreProfile::new(grid, ds)?;
    let pairs = eigen_solve(&profile, modes)?;
    let ortho = orthogonality_check(&pairs, &profile)?;
    let io = |e| Error::io("<stdout>", e);
    writeln!(out, "n,k,lambda,interior_zeros").map_err(io)?;
    for (n, p) in pairs.iter().enumerate() {
        writeln!(out, "{},{},{},{}", n + 1, p.k, p.lambda, p.interior_zeros()).map_err(io)?;
    }
    info!("orthogonality defect {ortho:e}");
    Ok(ortho)
}

/// Writes the sampled analytic mode as CSV rows `x,phi,dphi`; returns its
/// wave number.
pub fn oracle(
    kind: OracleKind,
    n: usize,
    length: f64,
    m: usize,
    out: &mut impl Write,
) -> Result<f64> {
    let grid = Grid::new(m, length)?;
    let pair = analytic_oracle(kind, length, n, &grid)?;
    let io = |e| Error::io("<stdout>", e);
    writeln!(out, "x,phi,dphi").map_err(io)?;
    for (i, (p, dp)) in pair.phi.iter().zip(&pair.dphi).enumerate() {
        writeln!(out, "{},{},{}", grid.node(i), p + 0.0, dp + 0.0).map_err(io)?;
    }
    Ok(pair.k)
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e @ Error::Io { .. }) => {
                    eprintln!("error: {e}\n\n{}", Cli::command().render_usage());
                    return Ok(EXIT_ERROR);
                }
                Err(e) => return Err(e),
            };
            if let Some(s) = seed {
                cfg.opt.seed = s;
            }
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            cfg.validate()?;
            let summary = run(&cfg)?;
            println!("{}", summary.line);
            Ok(summary.exit_code)
        }
        Command::Verify { duct, modes } => {
            let ortho = verify(&duct, modes, &mut std::io::stdout().lock())?;
            eprintln!("orthogonality defect {ortho:.3e}");
            Ok(EXIT_CONVERGED)
        }
        Command::Oracle { kind, n, length, m } => {
            let k = oracle(kind, n, length, m, &mut std::io::stdout().lock())?;
            eprintln!("k = {k}");
            Ok(EXIT_CONVERGED)
        }
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_ERROR
            } else {
                EXIT_CONVERGED
            };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
