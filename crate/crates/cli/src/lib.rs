//! `dropsync` command-line front end. Every subcommand writes its outputs
//! and a [`manifest::RunManifest`] into `<--out>/<subcommand>-<config hash>`.

pub mod args;
pub mod commands;
pub mod error;
pub mod manifest;

use std::ffi::OsString;

use clap::Parser;

use crate::args::Cli;
use crate::commands::Outcome;
use crate::error::{CliError, Result};

/// Parse arguments and run one subcommand.
pub fn try_run<I, T>(args: I) -> Result<Outcome>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => CliError::Help(e.to_string()),
        _ => CliError::Usage(e.to_string()),
    })?;
    let threads = cli.command.common().threads.unwrap_or(0);
    if threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::runtime(e.to_string()))?;
        pool.install(|| commands::execute(&cli.command))
    } else {
        commands::execute(&cli.command)
    }
}

/// Process entry point; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    match try_run(args) {
        Ok(out) => {
            println!("{}", out.summary.trim_end());
            println!("run directory: {}", out.run_dir.display());
            match out.failure {
                Some(msg) => {
                    eprintln!("error: {msg}");
                    2
                }
                None => 0,
            }
        }
        Err(CliError::Help(msg)) => {
            print!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
