//! Command-line front end: load models, run the static and dynamic solvers
//! and the verification suites, and emit reproducible reports.
//!
//! Exit status: 0 when every reported assertion passes, 2 on a numerical
//! failure (a failed assertion or a solver that did not converge), 3 on
//! input or configuration errors.

mod commands;
mod config;
mod report;

use clap::{Parser, Subcommand};
use config::{MethodOpt, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "palmot",
    version,
    about = "Transport distances between stationarized periodic measures on the flat torus"
)]
struct Cli {
    /// JSON config file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Cost exponent (p > 1).
    #[arg(long, global = true)]
    p: Option<f64>,
    /// Static solver backend.
    #[arg(long, value_enum, global = true)]
    method: Option<MethodOpt>,
    /// Entropic regularization for the sinkhorn backend.
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Cells per axis for grid commands.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Time steps for dynamic commands.
    #[arg(long, global = true)]
    timesteps: Option<usize>,
    /// Convergence tolerance for iterative solvers.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Seed for randomized fixtures.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for the report and tables.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Static transport cost between two point models.
    Static {
        xi: PathBuf,
        eta: PathBuf,
        /// Also search the relative-shift family for a better alignment.
        #[arg(long)]
        optimize_shift: bool,
    },
    /// Displacement geodesic, its action, residual and extractions.
    Geodesic {
        xi: PathBuf,
        eta: PathBuf,
        /// Comma-separated extraction times in [0, 1].
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
    },
    /// Dynamic grid solver for two periodic densities, with static cross-check.
    Bb { rho0: PathBuf, rho1: PathBuf },
    /// Seeded property suites (campbell, balancing, equality, ce, metric).
    Verify {
        /// Comma-separated suite selection.
        #[arg(long, value_delimiter = ',')]
        suites: Option<Vec<String>>,
        /// Inject a defect into one suite; its checks must then fail.
        #[arg(long)]
        corrupt: Option<String>,
    },
    /// Palm measure of a model.
    Palm { model: PathBuf },
    /// Write a fixture model file.
    Generate {
        kind: commands::generate::FixtureKind,
        /// Destination path for the model document.
        destination: PathBuf,
        #[arg(long, default_value_t = 1)]
        dimension: usize,
        #[arg(long, default_value_t = 2.0)]
        period: f64,
        /// Atoms per axis for point fixtures.
        #[arg(long, default_value_t = 4)]
        n: usize,
    },
}

fn effective_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(p) = cli.p {
        config.p = p;
    }
    if let Some(method) = cli.method {
        config.method = method;
    }
    if let Some(eps) = cli.eps {
        config.eps = eps;
    }
    if let Some(grid) = cli.grid {
        config.grid = grid;
    }
    if let Some(timesteps) = cli.timesteps {
        config.timesteps = timesteps;
    }
    if let Some(tol) = cli.tol {
        config.tol = tol;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = Some(out.clone());
    }
    match &cli.command {
        Command::Static { optimize_shift, .. } => {
            config.optimize_shift = config.optimize_shift || *optimize_shift;
        }
        Command::Geodesic {
            times: Some(times), ..
        } => {
            config.times = times.clone();
        }
        Command::Verify { suites, corrupt } => {
            if let Some(suites) = suites {
                config.suites = suites.clone();
            }
            if let Some(corrupt) = corrupt {
                config.corrupt = Some(corrupt.clone());
            }
        }
        _ => {}
    }
    config.validate()?;
    Ok(config)
}

/// Solver non-convergence is a numerical outcome (exit 2); everything else
/// that errors before producing a report is an input problem (exit 3).
fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(palmot::Error::NoConvergence { .. }) = cause.downcast_ref::<palmot::Error>() {
            return 2;
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match effective_config(&cli) {
        Ok(config) => config,
        Err(err) => {
            eprintln!("error: {err:#}");
            return ExitCode::from(3);
        }
    };
    let result = match &cli.command {
        Command::Static { xi, eta, .. } => commands::static_cmd::run(xi, eta, &config),
        Command::Geodesic { xi, eta, .. } => commands::geodesic::run(xi, eta, &config),
        Command::Bb { rho0, rho1 } => commands::bb_cmd::run(rho0, rho1, &config),
        Command::Verify { .. } => commands::verify::run(&config),
        Command::Palm { model } => commands::palm::run(model, &config),
        Command::Generate {
            kind,
            destination,
            dimension,
            period,
            n,
        } => {
            return match commands::generate::run(
                *kind,
                *dimension,
                *period,
                *n,
                destination,
                &config,
            ) {
                Ok(()) => ExitCode::SUCCESS,
                Err(err) => {
                    eprintln!("error: {err:#}");
                    ExitCode::from(3)
                }
            };
        }
    };
    match result {
        Ok(report) => match report.finish(config.out.as_deref()) {
            Ok(code) => ExitCode::from(code),
            Err(err) => {
                eprintln!("error: {err:#}");
                ExitCode::from(3)
            }
        },
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}
