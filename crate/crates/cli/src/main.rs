use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use plm_core::exponents::compute_exponents;
use plm_core::lab::{run_command, Command};

#[derive(Parser)]
#[command(name = "plm", version, about = "Numerical laboratory for p-Laplacian type problems with measure data")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(clap::Args)]
struct ExponentArgs {
    /// Single pair: print the exponent record as JSON instead of running a config.
    #[arg(long, requires = "n", conflicts_with = "config")]
    p: Option<f64>,
    #[arg(long = "N", id = "n", requires = "p")]
    n: Option<usize>,
    #[arg(long, required_unless_present = "p")]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Critical exponents over a (p, N) sweep, or of a single pair.
    Exponents(ExponentArgs),
    /// Classification and approximation schedule of a measure.
    Measures(Common),
    /// Solve one problem and summarize the field.
    Solve(Common),
    /// Solve and check the a priori estimates.
    Verify(Common),
    /// Evaluate Wolff potentials at points.
    Wolff(Common),
    /// Capacity of a condenser or grid set.
    Capacity(Common),
    /// Run an iteration scheme.
    Iterate(Common),
    /// Stability experiment over an approximating family.
    Stability(Common),
}

fn single_pair(p: f64, n: usize) -> ExitCode {
    match compute_exponents(p, n).map_err(|e| e.to_string()).and_then(|e| {
        serde_json::to_string_pretty(&e).map_err(|e| e.to_string())
    }) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Cmd::Exponents(a) => match (a.p, a.n, a.config) {
            (Some(p), Some(n), _) => return single_pair(p, n),
            (_, _, Some(config)) => (
                Command::Exponents,
                Common {
                    config,
                    out: a.out,
                    workers: a.workers,
                },
            ),
            _ => unreachable!("clap enforces --config or --p/--N"),
        },
        Cmd::Measures(a) => (Command::Measures, a),
        Cmd::Solve(a) => (Command::Solve, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Wolff(a) => (Command::Wolff, a),
        Cmd::Capacity(a) => (Command::Capacity, a),
        Cmd::Iterate(a) => (Command::Iterate, a),
        Cmd::Stability(a) => (Command::Stability, a),
    };
    match run_command(cmd, &args.config, &args.out, args.workers) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            println!("{}: {}", outcome.command, if outcome.passed { "PASS" } else { "FAIL" });
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
