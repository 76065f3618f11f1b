//! Experiment harness for distributed Bayesian inference over networks:
//! TOML configuration, seeded and resumable replication runs, CSV/JSON
//! persistence, and one subcommand per network-inference experiment.

pub mod config;
pub mod experiments;
pub mod records;
pub mod runner;

use std::path::{Path, PathBuf};

use thiserror::Error;

use config::ExperimentConfig;
use runner::RunOptions;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 3 for numerical
    /// failures, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Numerical(_) => 3,
            HarnessError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Bvm,
    Contraction,
    Timevary,
    Coverage,
    LlnClt,
}

/// Runs one subcommand against a validated config, returning the path of
/// the produced CSV.
pub fn run_command(
    command: Command,
    cfg: &ExperimentConfig,
    out_dir: &Path,
    options: &RunOptions,
) -> Result<PathBuf, HarnessError> {
    let base = cfg.base_matrix()?;
    let cfg = cfg.clone();
    match command {
        Command::Simulate => runner::run_experiment(
            &experiments::simulate::SimulateExperiment { cfg, base },
            out_dir,
            options,
        ),
        Command::Bvm => {
            experiments::require_gaussian(&cfg, "bvm")?;
            runner::run_experiment(
                &experiments::bvm::BvmExperiment { cfg, base },
                out_dir,
                options,
            )
        }
        Command::Contraction => {
            experiments::require_gaussian(&cfg, "contraction")?;
            if cfg.contraction.is_none() {
                return Err(HarnessError::Config(
                    "contraction: missing [contraction] section".into(),
                ));
            }
            runner::run_experiment(
                &experiments::contraction::ContractionExperiment { cfg, base },
                out_dir,
                options,
            )
        }
        Command::Timevary => {
            experiments::require_gaussian(&cfg, "timevary")?;
            if cfg.timevary.is_none() {
                return Err(HarnessError::Config(
                    "timevary: missing [timevary] section".into(),
                ));
            }
            runner::run_experiment(
                &experiments::timevary::TimevaryExperiment { cfg, base },
                out_dir,
                options,
            )
        }
        Command::Coverage => {
            experiments::require_gaussian(&cfg, "coverage")?;
            if cfg.coverage.is_none() {
                return Err(HarnessError::Config(
                    "coverage: missing [coverage] section".into(),
                ));
            }
            runner::run_experiment(
                &experiments::coverage::CoverageExperiment { cfg, base },
                out_dir,
                options,
            )
        }
        Command::LlnClt => {
            if cfg.llnclt.is_none() {
                return Err(HarnessError::Config(
                    "lln-clt: missing [llnclt] section".into(),
                ));
            }
            runner::run_experiment(
                &experiments::llnclt::LlnCltExperiment { cfg, base },
                out_dir,
                options,
            )
        }
    }
}
