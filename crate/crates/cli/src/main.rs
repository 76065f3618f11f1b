use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use disbayes_cli::config::ExperimentConfig;
use disbayes_cli::runner::RunOptions;
use disbayes_cli::{run_command, Command};

/// Distributed Bayesian inference experiments over communication graphs.
#[derive(Parser)]
#[command(name = "disbayes", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Clone, Parser)]
struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: config's output.dir, else "out").
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: config's run.workers).
    #[arg(long)]
    workers: Option<usize>,
    /// Skip replication units whose part files already exist.
    #[arg(long)]
    resume: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Stream the update loop and record per-checkpoint trajectories.
    Simulate(CommonArgs),
    /// Total variation of the rescaled posterior to its Gaussian limit.
    Bvm(CommonArgs),
    /// Posterior loss against the horizon, with the rate decomposition.
    Contraction(CommonArgs),
    /// Approximation error against the communication frequency.
    Timevary(CommonArgs),
    /// Frequentist coverage of the chi-square credible region.
    Coverage(CommonArgs),
    /// Consensus-weighted law of large numbers and central limit checks.
    #[command(name = "lln-clt")]
    LlnClt(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Bvm(a) => (Command::Bvm, a),
        Cmd::Contraction(a) => (Command::Contraction, a),
        Cmd::Timevary(a) => (Command::Timevary, a),
        Cmd::Coverage(a) => (Command::Coverage, a),
        Cmd::LlnClt(a) => (Command::LlnClt, a),
    };

    let mut cfg = match ExperimentConfig::from_path(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("disbayes: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    let out_dir = args
        .out
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let options = RunOptions {
        workers: args.workers.unwrap_or(cfg.run.workers),
        resume: args.resume,
    };

    match run_command(command, &cfg, &out_dir, &options) {
        Ok(csv) => {
            eprintln!("disbayes: wrote {}", csv.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("disbayes: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
