//! Command line driver.
//!
//! ```text
//! qcorr <spectrum|ambiguity|correlate|oracle-check> --config PATH [--out PATH] [--threads N]
//! ```
//!
//! Exit codes: 0 success, 1 internal error, 2 config error, 3 budget or
//! conditioning refusal, 4 failed check. Observables in configs use the
//! grammar of [`crate::observables::parse_observable`].

pub mod config;
pub mod experiments;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{Config, ConfigError, ProductKind};
pub use experiments::{
    ambiguity_point, numeric_product, run_ambiguity, run_correlate, run_oracle_check, run_spectrum, AmbiguityPoint,
    Report, RunError,
};

pub const EXIT_FAILED_CHECK: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "qcorr", version, about = "Transfer-matrix experiments on an oscillator chain")]
pub struct Args {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the CSV here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "QCORR_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Lowest levels of the Hamiltonian and of the step kernel.
    Spectrum,
    /// Forward against symmetric derivative squares over `eps_list`.
    Ambiguity,
    /// Two-point functions for `pairs` with the chosen product.
    Correlate,
    /// Brute-force sums against the transfer route.
    OracleCheck,
}

pub fn execute(command: Command, cfg: &Config) -> Result<Report, RunError> {
    match command {
        Command::Spectrum => run_spectrum(cfg),
        Command::Ambiguity => run_ambiguity(cfg),
        Command::Correlate => run_correlate(cfg),
        Command::OracleCheck => run_oracle_check(cfg),
    }
}

/// Parses arguments, runs the experiment and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&args) {
        Ok(true) => 0,
        Ok(false) => EXIT_FAILED_CHECK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(args: &Args) -> Result<bool, RunError> {
    let path = args.config.as_ref().ok_or_else(|| RunError::Config("--config PATH is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg = Config::parse(&text)?;
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(RunError::Config("--threads must be at least 1".into()));
        }
        // A pool that is already set up (e.g. by an earlier call in the same
        // process) is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let report = execute(args.command, &cfg)?;
    match &args.out {
        Some(out) => std::fs::write(out, &report.csv)
            .map_err(|e| RunError::Internal(format!("cannot write {}: {e}", out.display())))?,
        None => print!("{}", report.csv),
    }
    if !report.passed {
        log::error!("at least one check failed");
    }
    Ok(report.passed)
}
