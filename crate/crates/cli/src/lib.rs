//! Batch front end: parses run configs, runs optimizations and
//! evaluations, and writes pulses, trajectories and reports to disk.

use std::ffi::OsString;
use std::fmt::Display;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;

pub use commands::{audit, evaluate, noise_gen, optimize, sweep, Outcome, PulseSource, RunOptions};
pub use config::{RunConfig, SCHEMA_VERSION};

pub const EXIT_OK: u8 = 0;
/// Unexpected I/O failure while writing outputs.
pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;
pub const EXIT_EVALUATION: u8 = 4;

#[derive(Debug, Clone, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(e: impl Display) -> Self {
        Self { code: EXIT_CONFIG, message: e.to_string() }
    }

    pub fn solver(e: impl Display) -> Self {
        Self { code: EXIT_SOLVER, message: e.to_string() }
    }

    pub fn evaluation(e: impl Display) -> Self {
        Self { code: EXIT_EVALUATION, message: e.to_string() }
    }

    pub fn io(e: impl Display) -> Self {
        Self { code: EXIT_IO, message: e.to_string() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qtraj", version, about = "Robust qubit pulse optimization and evaluation")]
pub struct Cli {
    /// Output directory (overrides the config's `output_dir`).
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Default root for output directories.
    #[arg(long, global = true, env = "QTRAJ_OUTPUT_ROOT")]
    pub output_root: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
#[group(required = false, multiple = false)]
pub struct PulseArgs {
    /// Pulse CSV as written by `optimize`.
    #[arg(long)]
    pub pulse: Option<PathBuf>,
    /// Use the textbook pulse for the configured gate.
    #[arg(long)]
    pub analytic: bool,
}

impl PulseArgs {
    fn source(&self) -> Option<PulseSource> {
        match (&self.pulse, self.analytic) {
            (Some(p), _) => Some(PulseSource::File(p.clone())),
            (None, true) => Some(PulseSource::Analytic),
            (None, false) => None,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the configured gate problem.
    Optimize { config: PathBuf },
    /// Score a pulse under the configured perturbation.
    Evaluate {
        config: PathBuf,
        #[command(flatten)]
        pulse: PulseArgs,
    },
    /// Repeat optimize (or evaluate, given a pulse) over values of one
    /// config field, named by its dotted path.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[command(flatten)]
        pulse: PulseArgs,
    },
    /// Write a 1/f flux-noise sequence.
    NoiseGen { config: PathBuf },
    /// List the constraints, costs and dimensions of the gate problem.
    Audit { config: PathBuf },
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let opts = RunOptions { output: cli.output.clone(), output_root: cli.output_root.clone() };
    match &cli.command {
        Command::Optimize { config } => optimize(config, &opts),
        Command::Evaluate { config, pulse } => {
            let source = pulse.source().ok_or_else(|| CliError::config("evaluate needs --pulse or --analytic"))?;
            evaluate(config, &source, &opts)
        }
        Command::Sweep { config, param, values, pulse } => {
            sweep(config, param, values, pulse.source().as_ref(), &opts)
        }
        Command::NoiseGen { config } => noise_gen(config, &opts),
        Command::Audit { config } => audit(config, &opts),
    }
}

/// Parses `args`, runs, reports to stdout/stderr and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(out) => {
            println!("{}", out.summary);
            println!("outputs in {}", out.output_dir.display());
            if out.code != EXIT_OK {
                eprintln!("error: solver did not converge");
            }
            out.code
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pulse_flags_are_exclusive() {
        let r = Cli::try_parse_from(["qtraj", "evaluate", "c.json", "--pulse", "p.csv", "--analytic"]);
        assert!(r.is_err());
        let ok = Cli::try_parse_from(["qtraj", "sweep", "c.json", "--param", "a.b", "--values", "1,2,3"]).unwrap();
        match ok.command {
            Command::Sweep { values, .. } => assert_eq!(values, ["1", "2", "3"]),
            _ => unreachable!(),
        }
    }

    #[test]
    fn usage_errors_exit_with_config_code() {
        assert_eq!(main_with_args(["qtraj", "frobnicate"]), EXIT_CONFIG);
    }
}
