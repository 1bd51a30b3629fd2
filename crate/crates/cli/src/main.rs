use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cma_cli::commands;
use cma_core::estimate::Fault;

#[derive(Parser)]
#[command(name = "cmalab", version, about = "Finite-difference laboratory for the complex Monge-Ampère equation")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Check the density, solve (single solve, schedule or torus) and profile the solution.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Overrides the seed in the instance file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Random trials of the pointwise inequalities.
    Lemmas {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value = "lemmas")]
        out: PathBuf,
        /// Test hook: negate the Newton-type inequality.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Curvature samples and the orthogonal bisectional curvature test.
    Curvature {
        #[arg(long)]
        metric: String,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "curvature")]
        out: PathBuf,
    },
    /// Condition constants of the density in an instance file.
    Conditions {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value = "conditions")]
        out: PathBuf,
    },
    /// Summarize a run directory and check it against its manifest. Writes nothing.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.verb {
        Verb::Solve { instance, out, seed } => commands::solve(&instance, &out, seed),
        Verb::Lemmas { seed, trials, out, inject_fault } => {
            let fault = if inject_fault { Fault::NegateNewton } else { Fault::None };
            commands::lemmas(seed, trials, &out, fault)
        }
        Verb::Curvature { metric, samples, frames, seed, out } => {
            commands::curvature(&metric, samples, frames, seed, &out)
        }
        Verb::Conditions { instance, out } => commands::conditions(&instance, &out),
        Verb::Report { out } => commands::report(&out),
    };
    match res {
        Ok(o) => {
            println!("{}", o.summary);
            ExitCode::from(o.exit_code as u8)
        }
        Err(e) => {
            eprintln!("cmalab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
