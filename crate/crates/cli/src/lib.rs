//! Command-line front end for the rough volatility toolkit: configuration,
//! CSV ingestion and the `simulate`, `calibrate`, `price`, `acf`, `jsdist`
//! and `novikov` subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod output;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};

use config::{parse_args, Cli, ParseFailure, RunConfig};
use error::{CliError, CliResult};
use output::Table;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "ROUGHVOL_THREADS";

/// Runs one invocation and returns the process exit code.
pub fn run(args: Vec<OsString>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8 {
    let cli = match parse_args(args) {
        Ok(cli) => cli,
        Err(ParseFailure::Clap(e)) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    1
                }
            };
        }
        Err(ParseFailure::Config(e)) => return report(e, stderr),
    };
    match run_cli(&cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => report(e, stderr),
    }
}

fn report(e: CliError, stderr: &mut dyn Write) -> u8 {
    let _ = writeln!(stderr, "error: {e}");
    e.exit_code()
}

fn thread_cap() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::validation(format!("{THREADS_ENV}: {e}"))),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::validation(format!(
                "{THREADS_ENV} must be a positive integer, got '{v}'"
            ))),
        },
    }
}

fn run_cli(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let rc = RunConfig::resolve(cli.command.name(), cli.command.settings())?;
    let mut notes = Vec::new();
    let compute = |notes: &mut Vec<String>| commands::execute(&cli.command, &rc, notes);
    let result = match thread_cap()? {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(format!("cannot start {n} worker threads: {e}")))?
            .install(|| compute(&mut notes)),
        None => compute(&mut notes),
    };
    for note in &notes {
        writeln!(stderr, "{note}")?;
    }
    let table = result?;
    emit(&table, &rc, stdout)
}

fn emit(table: &Table, rc: &RunConfig, stdout: &mut dyn Write) -> CliResult<()> {
    match &rc.out {
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            table.write(rc.format, &mut w)?;
            w.flush()?;
        }
        None => table.write(rc.format, stdout)?,
    }
    Ok(())
}
