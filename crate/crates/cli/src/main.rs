//! Command-line front end: config parsing, dispatch and output files.

mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "exclusim",
    version,
    about = "Exclusion process simulator and convergence experiments"
)]
#[command(after_help = exclusim::config::DEFAULTS_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML) or a previous run manifest (JSON); built-in default when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the base seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "exclusim-out")]
    out: PathBuf,
    /// Worker threads (0 lets the pool decide).
    #[arg(long, global = true, env = "EXCLUSIM_THREADS")]
    threads: Option<usize>,
    /// Print the report as JSON on stdout instead of a summary.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Dump vertices and conductances.
    GenGraph,
    /// Sample a trajectory of the exclusion process.
    Simulate,
    /// Dense transition kernel of the conductance walk.
    Kernel,
    /// Solve the limit heat equation.
    Pde,
    /// Martingale-term bound over the n-list.
    Duality,
    /// Homogenization discrepancy over the n-list.
    Homogenize,
    /// Hydrodynamic deviation probability over the n-list.
    Hydro,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::GenGraph => "gen-graph",
            Command::Simulate => "simulate",
            Command::Kernel => "kernel",
            Command::Pde => "pde",
            Command::Duality => "duality",
            Command::Homogenize => "homogenize",
            Command::Hydro => "hydro",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = run::Options {
        command: cli.command,
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        json: cli.json,
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run::run(&opts)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
