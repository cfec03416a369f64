//! Command-line front end.

pub mod config;
pub mod report;
mod run;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::certify::Criterion;
pub use config::{ProblemConfig, SchemaError, parse_config};
pub use report::{Report, Status, human_summary};

#[derive(Debug, Parser)]
#[command(
    name = "loopdwell",
    version,
    about = "Dwell-time stability certificates for switched linear systems on digraphs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Suppress the summary on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Overrides the seed from the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enumerate simple loops, with per-loop bounds when matrices are given.
    Loops { config: PathBuf },
    /// Standard decomposition of the configured signal.
    Decompose { config: PathBuf },
    /// Classical dwell-time bounds.
    Bounds { config: PathBuf },
    /// Evaluate one stability criterion.
    Certify {
        config: PathBuf,
        #[arg(long)]
        criterion: Criterion,
    },
    /// Exact piecewise simulation of the configured signal.
    Simulate {
        config: PathBuf,
        /// CSV trace output.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Samples per switching interval in the trace.
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
    /// Certify, then simulate random class members.
    Validate {
        config: PathBuf,
        #[arg(long)]
        criterion: Criterion,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        /// Switches per trial.
        #[arg(long, default_value_t = 200)]
        horizon: usize,
    },
    /// Draw a random signal from the configured class.
    Synth {
        config: PathBuf,
        #[arg(long)]
        length: usize,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Loops { .. } => "loops",
            Self::Decompose { .. } => "decompose",
            Self::Bounds { .. } => "bounds",
            Self::Certify { .. } => "certify",
            Self::Simulate { .. } => "simulate",
            Self::Validate { .. } => "validate",
            Self::Synth { .. } => "synth",
        }
    }

    pub fn config(&self) -> &Path {
        match self {
            Self::Loops { config }
            | Self::Decompose { config }
            | Self::Bounds { config }
            | Self::Certify { config, .. }
            | Self::Simulate { config, .. }
            | Self::Validate { config, .. }
            | Self::Synth { config, .. } => config,
        }
    }
}

/// Runs a command against an already parsed config.
pub fn execute(command: &Command, cfg: &ProblemConfig, seed: Option<u64>) -> Report {
    run::run(command, cfg, &run::Flags { seed })
}

/// Parses the config file at `path` and runs the command; failures to read
/// or parse become input-error reports.
pub fn execute_file(command: &Command, seed: Option<u64>) -> Report {
    let path = command.config();
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            let mut r = Report::new(command.name());
            r.fail(Status::InputError, format!("{}: {e}", path.display()));
            return r;
        }
    };
    match parse_config(&text) {
        Ok(cfg) => execute(command, &cfg, seed),
        Err(e) => {
            let mut r = Report::new(command.name());
            r.fail(Status::InputError, e.to_string());
            r
        }
    }
}

/// Process entry point; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                Status::InputError.exit_code()
            } else {
                0
            };
        }
    };
    let report = execute_file(&cli.command, cli.seed);
    let json = report.to_json();
    match &cli.output {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &json) {
                eprintln!("cannot write {}: {e}", path.display());
                return Status::InputError.exit_code();
            }
        }
        None => print!("{json}"),
    }
    if !cli.quiet {
        eprint!("{}", human_summary(&report));
    }
    report.exit_code
}
