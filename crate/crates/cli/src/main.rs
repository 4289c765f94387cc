//! `energyforge`: analyse a flow, order its fixed points, build a sampled
//! energy function, check it and draw it.

mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use energyforge::energy::DEFAULT_RESOLUTION;
use energyforge::fixed_points::DEFAULT_HYPERBOLICITY_TOL;
use energyforge::Error;

#[derive(Parser, Debug)]
#[command(name = "energyforge", version, about = "Morse energy functions for flows on low-dimensional manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flow spec file, or `catalog:NAME` for a shipped flow.
    #[arg(long, global = true)]
    spec: Option<String>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Energy grid cells per chart side.
    #[arg(long, global = true, default_value_t = DEFAULT_RESOLUTION)]
    grid: usize,

    /// Seed for the verification samples.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Integrator relative tolerance, overriding `integrator.tol` in the flow file.
    #[arg(long = "tol-int", global = true)]
    tol_int: Option<f64>,

    /// Smallest |Re mu| accepted as hyperbolic.
    #[arg(long = "tol-hyp", global = true, default_value_t = DEFAULT_HYPERBOLICITY_TOL)]
    tol_hyp: f64,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Box graph, chain recurrence and fixed points.
    Analyze,
    /// Smale order of the fixed points.
    Order,
    /// Build the energy function on the grid.
    Build,
    /// Check a built energy function.
    Verify,
    /// Draw level sets, separatrices and fixed points.
    Plot,
    /// Every stage in turn.
    All,
}

/// Everything a run needs, validated.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub spec: Option<String>,
    pub out: PathBuf,
    pub resolution: usize,
    pub seed: u64,
    pub tol_int: Option<f64>,
    pub tol_hyp: f64,
}

/// A failed run: message and process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::LeftDomain { .. } | Error::StepUnderflow { .. } | Error::NonFinite(_) | Error::NoCrossing { .. } => 3,
            Error::NonHyperbolic { .. } | Error::DefectiveFrame { .. } => 4,
            Error::Scaffold { .. } | Error::Ordering(_) | Error::OutsideChart(_) => 5,
            Error::Syntax { .. }
            | Error::UnknownIdentifier { .. }
            | Error::Spec(_)
            | Error::HitPrecondition(_)
            | Error::Io(_)
            | Error::Format(_) => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::usage(e.to_string())
    }
}

impl RunConfig {
    fn new(cli: &Cli) -> Result<Self, Failure> {
        if cli.grid < 32 {
            return Err(Failure::usage(format!("--grid must be at least 32, got {}", cli.grid)));
        }
        if let Some(t) = cli.tol_int {
            if !(t > 0.0) {
                return Err(Failure::usage("--tol-int must be positive"));
            }
        }
        if !(cli.tol_hyp > 0.0) {
            return Err(Failure::usage("--tol-hyp must be positive"));
        }
        Ok(RunConfig {
            spec: cli.spec.clone(),
            out: cli.out.clone(),
            resolution: cli.grid,
            seed: cli.seed,
            tol_int: cli.tol_int,
            tol_hyp: cli.tol_hyp,
        })
    }
}

fn configure_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var("ENERGYFORGE_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::usage(format!("ENERGYFORGE_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    configure_threads()?;
    let config = RunConfig::new(cli)?;
    match cli.command {
        Command::Analyze => commands::analyze(&config).map(|_| ()),
        Command::Order => commands::order(&config).map(|_| ()),
        Command::Build => commands::build(&config),
        Command::Verify => commands::verify(&config),
        Command::Plot => commands::plot(&config),
        Command::All => {
            commands::build(&config)?;
            commands::plot(&config)?;
            commands::verify(&config)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
