mod commands;
mod config;
mod plot;

use clap::{Parser, ValueEnum};
use commands::{CliError, Ctx};
use config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Domain,
    Correctors,
    ExcessScan,
    NsSolve,
    VerifyIteration,
    GreenProbe,
    Inequalities,
}

/// Numerical experiments on Stokes and Navier-Stokes flows over rough walls.
#[derive(Parser, Debug)]
#[command(name = "bumpy", version)]
struct Args {
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default `out/<command>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write SVG plots.
    #[arg(long)]
    plots: bool,
}

fn run(args: Args) -> Result<(), CliError> {
    let config = RunConfig::read(&args.config).map_err(CliError::Config)?;
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    }
    let name = format!("{:?}", args.command.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default());
    let ctx = Ctx {
        seed: args.seed.or(config.seed).unwrap_or(0),
        base: args.config.parent().map(PathBuf::from).unwrap_or_default(),
        out: commands::out_dir(args.out.as_deref(), name.trim_matches('"')),
        plots: args.plots,
        config,
    };
    match args.command {
        Command::Domain => commands::domain(&ctx),
        Command::Correctors => commands::correctors(&ctx),
        Command::ExcessScan => commands::excess_scan(&ctx),
        Command::NsSolve => commands::ns_solve(&ctx),
        Command::VerifyIteration => commands::verify_iteration(&ctx),
        Command::GreenProbe => commands::green_probe(&ctx),
        Command::Inequalities => commands::inequalities(&ctx),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bumpy: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
