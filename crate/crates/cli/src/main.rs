//! `lds`: batch workbench for lattice Dyson-Schwinger reduction, coupling
//! flows, free propagators and brute-force validation.

mod commands;
mod config;
mod report;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{JobSpec, OutputFormat};

#[derive(Parser)]
#[command(
    name = "lds",
    version,
    about = "Reduce lattice phi^4 correlators to primitives, evolve them in the couplings, and validate against closed forms and quadrature"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reduce correlators to the primitive basis (exact coefficients)
    Reduce(CommonArgs),
    /// Count the primitive basis at several symmetry levels
    Count(CommonArgs),
    /// Evaluate free propagators on the four spaces
    Propagator(CommonArgs),
    /// Integrate a coupling flow from the random-field point
    Evolve(CommonArgs),
    /// Brute-force correlators by quadrature or Monte Carlo
    Oracle(CommonArgs),
    /// Run the cross-module identity suite
    Verify(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Job configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path (stdout when omitted); writes are atomic
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format: json | csv
    #[arg(long)]
    format: Option<String>,
    /// Numerical tolerance override
    #[arg(long)]
    tol: Option<f64>,
    /// RNG seed override (Monte Carlo)
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for independent targets
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Compute(lds_core::Error),
    Io(std::io::Error),
    Verification,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Compute(_) | CliError::Io(_) => 3,
            CliError::Verification => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "configuration error: {msg}"),
            CliError::Compute(e) => write!(f, "computation failed: {e}"),
            CliError::Io(e) => write!(f, "io error: {e}"),
            CliError::Verification => write!(f, "verification failed"),
        }
    }
}

fn load_job(command: &str, args: &CommonArgs) -> Result<JobSpec, CliError> {
    let mut job = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            JobSpec::parse(&text).map_err(CliError::Usage)?
        }
        None => JobSpec::default(),
    };
    job.command = command.to_owned();
    if let Some(format) = &args.format {
        job.format = format
            .parse::<OutputFormat>()
            .map_err(CliError::Usage)?;
    }
    if let Some(tol) = args.tol {
        job.tol = tol;
    }
    if let Some(seed) = args.seed {
        job.seed = seed;
    }
    if let Some(threads) = args.threads {
        job.threads = threads;
    }
    Ok(job)
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    let (name, args): (&str, &CommonArgs) = match &cli.command {
        Command::Reduce(a) => ("reduce", a),
        Command::Count(a) => ("count", a),
        Command::Propagator(a) => ("propagator", a),
        Command::Evolve(a) => ("evolve", a),
        Command::Oracle(a) => ("oracle", a),
        Command::Verify(a) => ("verify", a),
    };
    let job = load_job(name, args)?;
    let out = args.out.as_deref();
    match name {
        "reduce" => commands::cmd_reduce(&job, out),
        "count" => commands::cmd_count(&job, out),
        "propagator" => commands::cmd_propagator(&job, out),
        "evolve" => commands::cmd_evolve(&job, out),
        "oracle" => commands::cmd_oracle(&job, out),
        "verify" => commands::cmd_verify(&job, out),
        _ => unreachable!(),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lds: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
