//! `torus-waves` command-line entry point.
//!
//! Usage: `torus-waves <evolve|eig|sweep|manifold|flow|convergence>
//! --config <path> [--out <dir>] [--threads <n>]`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 I/O failure. The output directory is resolved as `--out`, then the
//! `TORUS_WAVES_OUT` environment variable, then `[output] directory`
//! from the config, then `./out`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use torus_waves::commands::{run_command, CommandError};
use torus_waves::config;

#[derive(Parser)]
#[command(name = "torus-waves", version, about = "Pseudo-spectral simulator for zeroth-order operators on the 2-torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides TORUS_WAVES_OUT and the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Caps backend worker threads; 1 guarantees determinism.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the forced evolution problem and record diagnostics.
    Evolve(RunArgs),
    /// Eigenpairs of the viscous operator at one viscosity.
    Eig(RunArgs),
    /// Eigenvalue trajectories over a decreasing viscosity list.
    Sweep(RunArgs),
    /// Sample the energy-manifold sheets and report coverage.
    Manifold(RunArgs),
    /// Integrate one characteristic-flow trajectory.
    Flow(RunArgs),
    /// Run a time/space/eigenvalue convergence study.
    Convergence(RunArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Evolve(a) => ("evolve", a),
        Command::Eig(a) => ("eig", a),
        Command::Sweep(a) => ("sweep", a),
        Command::Manifold(a) => ("manifold", a),
        Command::Flow(a) => ("flow", a),
        Command::Convergence(a) => ("convergence", a),
    };
    if let Some(threads) = args.threads {
        // The linear-algebra backend reads this at first use.
        std::env::set_var("OPENBLAS_NUM_THREADS", threads.to_string());
        std::env::set_var("OMP_NUM_THREADS", threads.to_string());
    }
    let cfg = match config::load(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            let err: CommandError = e.into();
            eprintln!("torus-waves: {err}");
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    let out_dir = args
        .out
        .clone()
        .or_else(|| std::env::var_os("TORUS_WAVES_OUT").map(PathBuf::from))
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    match run_command(name, &cfg, &out_dir) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("torus-waves: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
