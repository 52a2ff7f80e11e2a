//! Command-line driver for the `levelshift` library.
//!
//! The binary is a thin wrapper around [`run`]; everything it does is
//! reachable from tests through this crate.

// `!(x > 0.0)` style comparisons also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod commands;
pub mod config;
pub mod report;
pub mod scan;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::LoadedConfig;

/// Errors that end a run, each with its exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Compute(#[from] levelshift::error::Error),
    #[error("cannot write output: {0}")]
    Io(String),
}

impl CliError {
    /// 2 for config errors, 3 when the level shift operator does not exist,
    /// 4 for quadrature failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use levelshift::error::Error;
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(Error::NonexistentLso { .. }) => 3,
            CliError::Compute(Error::Quadrature { .. }) => 4,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScanParam {
    /// Infrared exponent of every form factor.
    P,
    /// Level spacing of a three-level model.
    Delta,
    /// Inverse temperature of every reservoir.
    Beta,
    /// Coupling constant.
    Lambda,
}

#[derive(Debug, Clone, PartialEq, Parser)]
#[command(name = "levelshift", version, about = "Level shift operators of open quantum systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Config file, or the name of a bundled config.
    #[arg(long, global = true)]
    pub config: Option<String>,
    /// Write the output here (atomically) instead of to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed of the randomized checks; also reseeds `[random]` models.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Comma-separated ε grid.
    #[arg(long, global = true, value_delimiter = ',')]
    pub eps_grid: Option<Vec<f64>>,
    /// Relative kernel tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Output format; JSON by default, CSV for scans.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Add wall-clock timings to the report. Off by default so that reports
    /// are reproducible byte for byte.
    #[arg(long, global = true)]
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq, Subcommand)]
pub enum Command {
    /// Build the level shift operators of every Bohr sector.
    Compute,
    /// Run the structural checks and the oracle cross-checks.
    Verify {
        /// Perturb the zero-sector operators; the symmetry checks must fail.
        #[arg(long)]
        corrupt_fixture: bool,
    },
    /// Sweep one parameter and tabulate spectra and rates.
    Scan {
        #[arg(long, value_enum)]
        param: ScanParam,
        #[arg(long, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, allow_hyphen_values = true)]
        to: f64,
        #[arg(long)]
        steps: usize,
    },
    /// Oracle cross-checks, including the fourth-order analysis.
    Oracle,
    /// List the bundled configs.
    Configs,
}

/// What a successful run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub text: String,
    pub exit_code: i32,
    /// Printed on stderr.
    pub diagnostic: Option<String>,
}

/// Loads the config named on the command line and applies the overrides.
pub fn effective_config(cli: &Cli) -> Result<LoadedConfig, CliError> {
    let spec = cli.config.as_deref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut loaded = LoadedConfig::load(spec)?;
    let cfg = &mut loaded.config;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
        if let Some(r) = cfg.random.as_mut() {
            r.seed = seed;
        }
    }
    if let Some(grid) = &cli.eps_grid {
        cfg.run.eps_grid = grid.clone();
    }
    if let Some(tol) = cli.tol {
        cfg.run.kernel_tol = tol;
    }
    cfg.validate()?;
    Ok(loaded)
}

/// Runs one command.
pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    if cli.command == Command::Configs {
        let text = config::BUNDLED.iter().map(|n| format!("{n}\n")).collect();
        return Ok(Outcome { text, exit_code: 0, diagnostic: None });
    }
    let cfg = effective_config(cli)?;
    let report = match &cli.command {
        Command::Compute => commands::compute(&cfg, cli.timing)?,
        Command::Verify { corrupt_fixture } => commands::verify(&cfg, *corrupt_fixture, cli.timing)?,
        Command::Oracle => commands::oracle(&cfg, cli.timing)?,
        Command::Scan { param, from, to, steps } => {
            let table = scan::scan(&cfg, *param, *from, *to, *steps)?;
            let text = match cli.format.unwrap_or(Format::Csv) {
                Format::Csv => table.to_csv(),
                Format::Json => table.to_json(),
            };
            let (exit_code, diagnostic) = match &table.error {
                Some(e) => (e.exit_code, Some(e.message.clone())),
                None => (0, None),
            };
            return Ok(Outcome { text, exit_code, diagnostic });
        }
        Command::Configs => unreachable!("handled above"),
    };
    let text = match cli.format.unwrap_or(Format::Json) {
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
    };
    let diagnostic = (!report.passed).then(|| {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect();
        format!("failed checks: {}", failed.join(", "))
    });
    Ok(Outcome { text, exit_code: if report.passed { 0 } else { 1 }, diagnostic })
}

/// Writes `text` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, text: &str) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| CliError::Io(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = std::fs::File::create(&tmp).map_err(io)?;
    f.write_all(text.as_bytes()).map_err(io)?;
    f.sync_all().map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}
