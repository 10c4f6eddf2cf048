//! `xtwave <mode> --config run.toml --out dir`

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use xtwave::config::{Mode, RunConfig};
use xtwave::driver::{run, RunOptions};

#[derive(Parser)]
#[command(name = "xtwave", version, about = "Space-time spline solver for the 1D wave equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve on every level; dump the finest solution.
    Solve(Common),
    /// Errors and convergence rates over halving levels.
    Convergence(Common),
    /// Errors and stability norms with a fixed time mesh.
    Stability(Common),
    /// Discrete inf-sup constants (small meshes only).
    Infsup(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output` key.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = "XTWAVE_THREADS")]
    threads: Option<usize>,
    /// Seed for the random evaluation points.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // help and version are not errors
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let (mode, args) = match cli.command {
        Command::Solve(a) => (Mode::Solve, a),
        Command::Convergence(a) => (Mode::Convergence, a),
        Command::Stability(a) => (Mode::Stability, a),
        Command::Infsup(a) => (Mode::Infsup, a),
    };
    if args.threads == Some(0) {
        eprintln!("error: --threads must be positive");
        return ExitCode::from(2);
    }
    let result = RunConfig::load(&args.config).and_then(|cfg| {
        run(
            &cfg,
            &RunOptions {
                mode,
                out: args.out,
                threads: args.threads,
                seed: args.seed,
            },
        )
    });
    match result {
        Ok(out) => {
            for r in &out.rows {
                eprintln!("{}", r.to_csv());
            }
            println!("{}", out.out_dir.join("results.csv").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
