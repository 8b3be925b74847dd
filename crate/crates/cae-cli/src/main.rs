//! `cae` — train, evaluate, and inspect budget-conditioned goal-reaching
//! values from the command line.
//!
//! Every subcommand writes its artifacts into a fresh `runs/<stamp>-<seed>/`
//! directory (override the parent with `--out`) and finishes by writing a
//! `manifest.json` recording the exact invocation, the effective config, and
//! a checksum inventory of every produced file.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

mod commands;
mod manifest;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "cae",
    version,
    about = "Budget-conditioned goal-reaching value suite",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a value function; writes checkpoint, metrics JSONL, manifest.
    Train(RunArgs),
    /// Roll a trained checkpoint over the fixed evaluation goals.
    Eval(RunArgs),
    /// Exact tables by dynamic programming; CSV plus property summary.
    Oracle(RunArgs),
    /// Train several recursion variants and tabulate them side by side.
    Compare(RunArgs),
    /// Render maps, heatmaps, trajectories, and learning curves as SVG.
    Plot(RunArgs),
}

/// One flag vocabulary shared by all subcommands; each consumes the subset
/// it understands and rejects meaningless leftovers via the config layer.
#[derive(Args)]
struct RunArgs {
    /// Environment: line-world | frozen-lake | checkerboard | mini-maze |
    /// dubins | dubins-small | dubins-open5.
    #[arg(long)]
    env: String,

    /// Recursion variant c | a | d | q (compare: comma list such as c,a,d).
    #[arg(long)]
    variant: Option<String>,

    /// `key = value` config file; command-line flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Run seed (also the trailing component of the run directory name).
    #[arg(long)]
    seed: Option<u64>,

    /// Parent directory that receives the per-run output folder.
    #[arg(long, default_value = "runs")]
    out: PathBuf,

    /// Worker threads; 1 keeps everything sequential.
    #[arg(long, default_value_t = 1)]
    threads: usize,

    /// Largest step budget the value function is conditioned on.
    #[arg(long)]
    h_max: Option<usize>,

    /// Budget-selection safety fraction in (0, 1].
    #[arg(long)]
    alpha: Option<f64>,

    /// Pre-recorded episodes (JSONL) preloaded into the replay buffer.
    #[arg(long)]
    replay_in: Option<PathBuf>,

    /// Checkpoint JSON produced by `train`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    let argv: Vec<String> = std::env::args().collect();
    let outcome = match &cli.command {
        Cmd::Train(args) => commands::train::run(args, &argv),
        Cmd::Eval(args) => commands::eval::run(args, &argv),
        Cmd::Oracle(args) => commands::oracle::run(args, &argv),
        Cmd::Compare(args) => commands::compare::run(args, &argv),
        Cmd::Plot(args) => commands::plot::run(args, &argv),
    };
    match outcome {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                // Mistakes in flags, config files, or command/artifact
                // pairings are the caller's to fix.
                cae_core::Error::Config(_) | cae_core::Error::NotEnumerable(_) => 1,
                _ => 2,
            }
        }
    }
}
