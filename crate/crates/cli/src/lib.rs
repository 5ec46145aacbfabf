//! Command-line front end for the soil mapping pipeline: JSON run
//! configuration, per-run output directory with a manifest, and a capped
//! worker pool whose size never changes the results.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Serialize;
use soilmap::{Error, Result};

use config::{RunConfig, THREADS_ENV};

#[derive(Debug, Parser)]
#[command(name = "soilmap", version, about = "Soil property mapping pipeline")]
pub struct Cli {
    /// JSON run configuration; omitted fields take built-in defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Top-level seed for the whole run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker thread cap; results are identical for any value.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub samples: Option<PathBuf>,
    #[arg(long, global = true)]
    pub stack_manifest: Option<PathBuf>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    /// Feature mask file (JSON name list) from a selection run.
    #[arg(long, global = true)]
    pub mask: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Descriptive statistics of the sample target.
    Stats,
    /// Derive band indices and terrain attributes onto a common grid.
    Covariates,
    /// Genetic-algorithm feature selection.
    Select,
    /// Cross-validated comparison of the configured learners.
    Evaluate,
    /// Prediction maps with confidence intervals and summaries.
    Map,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Stats => "stats",
            Command::Covariates => "covariates",
            Command::Select => "select",
            Command::Evaluate => "evaluate",
            Command::Map => "map",
        }
    }
}

/// Merges command-line overrides into the loaded configuration
/// (command line > config file > default).
fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            config::require_exists(path, "config file")?;
            RunConfig::load(path)?
        }
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.output_dir {
        config.output_dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(threads) = cli.threads {
        config.threads = Some(threads);
    }
    if let Some(samples) = &cli.samples {
        config.samples = Some(samples.clone());
    }
    if let Some(stack) = &cli.stack_manifest {
        config.stack_manifest = Some(stack.clone());
    }
    if let Some(folds) = cli.folds {
        config.folds = folds;
    }
    if let Some(mask) = &cli.mask {
        config.mask = Some(mask.clone());
    }
    Ok(config)
}

fn resolve_threads(config: &RunConfig) -> Result<Option<usize>> {
    if let Some(n) = config.threads {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(text) => {
            let n: usize = text.parse().map_err(|_| {
                Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{text}'"))
            })?;
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: String,
    seed: u64,
    threads: Option<usize>,
    cli_version: &'a str,
    core_version: &'a str,
}

/// Runs one command end to end: validate, record the manifest, execute
/// inside a bounded worker pool.
pub fn run(cli: &Cli) -> Result<()> {
    let config = effective_config(cli)?;
    config.validate()?;
    // Each command's required inputs are checked before any real work.
    match cli.command {
        Command::Stats | Command::Select | Command::Evaluate => {
            config.require_samples()?;
        }
        Command::Covariates => {
            config.require_bands()?;
        }
        Command::Map => {
            config.require_samples()?;
            config.require_stack()?;
        }
    }
    let threads = resolve_threads(&config)?;

    std::fs::create_dir_all(&config.output_dir)?;
    let manifest = Manifest {
        command: cli.command.name(),
        config_hash: config.hash()?,
        seed: config.seed,
        threads,
        cli_version: env!("CARGO_PKG_VERSION"),
        core_version: soilmap_version(),
    };
    let file = std::fs::File::create(config.output_dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &manifest)?;

    let body = || match cli.command {
        Command::Stats => commands::cmd_stats(&config),
        Command::Covariates => commands::cmd_covariates(&config),
        Command::Select => commands::cmd_select(&config),
        Command::Evaluate => commands::cmd_evaluate(&config),
        Command::Map => commands::cmd_map(&config),
    };
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            pool.install(body)
        }
        None => body(),
    }
}

fn soilmap_version() -> &'static str {
    // The core crate version is pinned alongside this one in the workspace.
    "0.1.0"
}

/// Parses and runs, returning the process exit code: 0 success, 2 I/O or
/// malformed input, 3 validation, 4 non-convergence.
pub fn run_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 3,
            };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
