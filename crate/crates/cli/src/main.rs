mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use commands::{ConvergeArgs, GnnArgs, SweepArgs, UsageError};

#[derive(Parser)]
#[command(name = "rankkeeper", version, about = "Rank collapse in deep attention stacks and GCNs, with the centered fix")]
struct Cli {
    /// Worker threads for independent cells and runs (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank and cosine of deep attention stacks over a γ grid.
    Sweep(SweepArgs),
    /// Convergence of repeated attention to a rank-one matrix.
    Converge(ConvergeArgs),
    /// GCN depth grid over modes, depths and seeds.
    Gnn(GnnArgs),
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
        /// Write outputs here instead of the recorded location.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(UsageError::new("--jobs must be at least 1").into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("starting worker pool")?;
    }
    match cli.command {
        Command::Sweep(args) => commands::sweep(args),
        Command::Converge(args) => commands::converge(args),
        Command::Gnn(args) => commands::gnn(args),
        Command::Replay { manifest, out } => commands::replay(&manifest, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
