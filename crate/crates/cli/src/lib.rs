//! Command-line front end: configuration, suites, sweeps, log checking
//! and replay export.

pub mod cli;
pub mod commands;
pub mod config;
pub mod output;

use std::process::ExitCode;

use clap::Parser;

use crate::cli::{Cli, Command};

/// Exit status when a check fails.
pub const EXIT_CHECK_FAILED: u8 = 1;
/// Exit status on configuration or I/O errors.
pub const EXIT_ERROR: u8 = 2;

fn dispatch(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run(args) => {
            let config = args.resolve()?;
            config.validate()?;
            commands::cmd_run(&config)
        }
        Command::Sweep { common, axis, values } => {
            let config = common.resolve()?;
            commands::cmd_sweep(&config, axis, &values)
        }
        Command::Check { dir } => Ok(commands::print_check(&commands::cmd_check(&dir)?)),
        Command::MakeReplay(args) => {
            let config = args.resolve()?;
            let path = args
                .out
                .clone()
                .ok_or_else(|| anyhow::anyhow!("make-replay needs --out FILE"))?;
            commands::cmd_make_replay(&config, &path)?;
            Ok(true)
        }
    }
}

/// Parse `args` and run; the exit code is 0 when all checks pass.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
