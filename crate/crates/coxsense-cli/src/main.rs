//! `coxsense`: adaptive sensing of Cox processes from the command line.

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use coxsense::cli;
use coxsense::config::{ExperimentConfig, SuiteConfig};

#[derive(Parser)]
#[command(
    name = "coxsense",
    about = "Adaptive sensing of Cox point processes: bases, fits, runs, suites, posterior dumps",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build the configured basis; write sampled basis functions and the
    /// covariance-matching residual.
    Basis {
        #[command(flatten)]
        common: Common,
    },
    /// Fit a ground-truth intensity to a full event record (CSV `x[,y],t`).
    Fit {
        #[command(flatten)]
        common: Common,
        /// Event file with header `x[,y],t` (t optional).
        #[arg(long)]
        events: PathBuf,
    },
    /// Run one sensing episode and write its trace.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Run a suite (algorithms x seeds) and aggregate quantiles.
    Suite {
        /// Suite configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads (also honored from COXSENSE_JOBS).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Dump posterior sample chains and grid intensities.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Number of chains.
        #[arg(long, default_value_t = 1)]
        chains: usize,
        /// Observation log CSV (pairs with --log-sidecar); omit for the
        /// empty prior.
        #[arg(long, requires = "log_sidecar")]
        log: Option<PathBuf>,
        /// Observation log JSON sidecar.
        #[arg(long, requires = "log")]
        log_sidecar: Option<PathBuf>,
    },
}

fn load_experiment(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_file(&common.config)
        .with_context(|| format!("loading {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn env_jobs() -> Option<usize> {
    std::env::var("COXSENSE_JOBS").ok()?.parse().ok()
}

fn main() -> anyhow::Result<()> {
    let args = Cli::parse();
    match args.command {
        Command::Basis { common } => {
            let config = load_experiment(&common)?;
            cli::cmd_basis(&config, &common.out)?;
            println!("basis written to {}", common.out.display());
        }
        Command::Fit { common, events } => {
            let config = load_experiment(&common)?;
            cli::cmd_fit(&events, &config, &common.out)?;
            println!("ground truth written to {}", common.out.display());
        }
        Command::Run { common } => {
            let config = load_experiment(&common)?;
            cli::cmd_run(&config, &common.out)?;
            println!("trace written to {}", common.out.display());
        }
        Command::Suite { config, out, jobs } => {
            let mut suite =
                SuiteConfig::from_file(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(jobs) = jobs.or_else(env_jobs) {
                suite.jobs = Some(jobs);
            }
            cli::cmd_suite(&suite, &out)?;
            println!("suite aggregate written to {}", out.display());
        }
        Command::Sample {
            common,
            chains,
            log,
            log_sidecar,
        } => {
            let config = load_experiment(&common)?;
            let log_paths = match (log, log_sidecar) {
                (Some(csv), Some(json)) => Some((csv, json)),
                _ => None,
            };
            cli::cmd_sample(&config, log_paths, chains, &common.out)?;
            println!("samples written to {}", common.out.display());
        }
    }
    Ok(())
}
