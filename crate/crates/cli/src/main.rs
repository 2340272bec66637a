//! `driftscope` command-line driver.
//!
//! Exit codes: 0 success, 1 invalid invocation or input, 2 failure while
//! running. Every subcommand validates all of its inputs before it writes
//! anything, and records the fully resolved configuration in a manifest next
//! to its outputs.

mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};

/// Error tagged with the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    Invalid(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

/// Attaches an exit-code class to fallible results.
pub trait Classify<T> {
    fn invalid(self, context: impl FnOnce() -> String) -> Result<T, Failure>;
    fn runtime(self, context: impl FnOnce() -> String) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn invalid(self, context: impl FnOnce() -> String) -> Result<T, Failure> {
        self.map_err(|e| Failure::Invalid(e.into().context(context())))
    }

    fn runtime(self, context: impl FnOnce() -> String) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into().context(context())))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
        {
            log::warn!("could not size the worker pool: {e}");
        }
    }

    let result = match &cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Bins(a) => commands::bins(a),
        Command::Drift(a) => commands::drift(a, cli.jobs),
        Command::AblateSize(a) => commands::ablate_size(a, cli.jobs),
        Command::AblateWindow(a) => commands::ablate_window(a, cli.jobs),
        Command::Diagnose(a) => commands::diagnose(a),
        Command::Sentiment(a) => commands::sentiment(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Invalid(e) | Failure::Runtime(e)) = &f;
            eprintln!("error: {e:#}");
            if matches!(f, Failure::Invalid(_)) {
                eprintln!("run with --help for usage");
            }
            ExitCode::from(f.code())
        }
    }
}
