//! `needlets`: runs needlet correlation, simulation and statistics
//! experiments from TOML configurations.
//!
//! Exit codes: 0 success, 1 a check command's assertion failed or output
//! could not be written, 2 invalid input, 3 parameters outside the regime a
//! result applies to, 4 numerical failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::commands::Verdict;
use crate::config::{ConfigError, ExperimentConfig};
use crate::output::Output;

#[derive(Debug, Parser)]
#[command(name = "needlets", version, about = "Needlet correlation, simulation and statistics experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file; defaults apply to anything it omits.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override `run.out`, the output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads; all cores by default.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override one configuration key, e.g. `--set spectrum.alpha=3.5`.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Window weights w_j(l) and spatial profiles per scale.
    KernelDump,
    /// Exact coefficient correlations over a (j1, j2, theta) lattice.
    CorrTable,
    /// Fit the decay exponent of diagonal correlations across scales.
    DecayFit,
    /// Compare correlations with the decorrelation envelope.
    BoundCheck,
    /// Check that correlations persist near 1 in the supercritical regime.
    SupercriticalCheck,
    /// Least-squares gap between the SMHW profile and the Mexican needlet.
    SmhwGap,
    /// Monte Carlo correlation of two needlet coefficients.
    McCorr,
    /// Hermite-statistic central limit diagnostics.
    Clt,
    /// Monte Carlo check of the Gamma_j estimator against its expectation.
    Gamma,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::KernelDump => "kernel-dump",
            Command::CorrTable => "corr-table",
            Command::DecayFit => "decay-fit",
            Command::BoundCheck => "bound-check",
            Command::SupercriticalCheck => "supercritical-check",
            Command::SmhwGap => "smhw-gap",
            Command::McCorr => "mc-corr",
            Command::Clt => "clt",
            Command::Gamma => "gamma",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] needlet_core::Error),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
    #[error("thread pool: {0}")]
    Threads(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(ConfigError::Core(e)) | CliError::Core(e) => e.exit_code() as u8,
            CliError::Config(_) => 2,
            CliError::Io(_) | CliError::Threads(_) => 1,
        }
    }
}

fn run(cli: Cli) -> Result<Verdict, CliError> {
    let name = cli.command.name();
    let mut cfg = ExperimentConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.run.out = out;
    }
    if cli.threads.is_some() {
        cfg.run.threads = cli.threads;
    }
    cfg.validate(name)?;
    if let Some(n) = cfg.run.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }

    let mut out = Output::create(&cfg.run.out, cfg.digest(name))?;
    let resolved = toml::to_string(&cfg).map_err(|e| ConfigError::Parse(e.to_string()))?;
    out.text("config_resolved.toml", &format!("# config_digest={}\n# command={name}\n{resolved}", out.digest()))?;
    let verdict = match cli.command {
        Command::KernelDump => commands::kernel_dump(&cfg, &mut out),
        Command::CorrTable => commands::corr_table(&cfg, &mut out),
        Command::DecayFit => commands::decay_fit(&cfg, &mut out),
        Command::BoundCheck => commands::bound_check(&cfg, &mut out),
        Command::SupercriticalCheck => commands::supercritical_check(&cfg, &mut out),
        Command::SmhwGap => commands::smhw_gap(&cfg, &mut out),
        Command::McCorr => commands::mc_corr(&cfg, &mut out),
        Command::Clt => commands::clt(&cfg, &mut out),
        Command::Gamma => commands::gamma(&cfg, &mut out),
    }?;
    for path in out.written() {
        eprintln!("wrote {}", path.display());
    }
    Ok(verdict)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Verdict::Done) => ExitCode::SUCCESS,
        Ok(Verdict::CheckFailed(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
