//! Command-line front end: dataset generation, runs, evaluation, N sweeps
//! and mode comparisons, each leaving a manifest next to its outputs.

pub mod args;
pub mod commands;

use std::fmt;

use clap::Parser;

use args::{Cli, Command};

/// A request that cannot be carried out as given.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Exit status for a failed command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    use trade_reid::Error as E;
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_VALIDATION;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Parse { .. }
                | E::Validation(_)
                | E::Config(_)
                | E::MissingEmbedding(_)
                | E::MissingScore(_)
                | E::Generation(_)
                | E::Json(_) => EXIT_VALIDATION,
                E::Evaluation(_) | E::OracleRefused(_) | E::Io { .. } => EXIT_RUNTIME,
            };
        }
    }
    EXIT_RUNTIME
}

/// Parses `argv`, runs the command and returns the exit status, printing
/// reports to stdout and errors to stderr.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_VALIDATION
            } else {
                EXIT_OK
            };
        }
    };
    match dispatch(&cli.command) {
        Ok(report) => {
            print!("{report}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

pub fn dispatch(command: &Command) -> anyhow::Result<String> {
    let (_, report) = match command {
        Command::Rerun(a) => commands::rerun(&a.manifest, &a.out_dir)?,
        other => {
            let (invocation, out_dir) = commands::resolve(other)?;
            commands::execute(&invocation, &out_dir)?
        }
    };
    Ok(report)
}
