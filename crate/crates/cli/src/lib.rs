//! Command-line front end and HTTP service for the cane-field coverage toolkit.

pub mod args;
pub mod commands;
pub mod config;
pub mod pipeline;
pub mod serve;

use std::ffi::OsString;
use std::fmt;

use clap::Parser;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// A bad combination of arguments detected after parsing; exits with [`EXIT_USAGE`].
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn fail(e: anyhow::Error) -> i32 {
    eprintln!("error: {e:#}");
    if e.downcast_ref::<UsageError>().is_some() {
        EXIT_USAGE
    } else {
        EXIT_RUNTIME
    }
}

/// Parses `argv`, runs the command and prints its report. Returns the exit code.
pub fn run(argv: impl IntoIterator<Item = OsString>) -> i32 {
    let argv = match config::merge_config_file(argv.into_iter().collect()) {
        Ok(a) => a,
        Err(e) => return fail(e),
    };
    let cli = match args::Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match commands::execute(&cli) {
        Ok(report) => {
            if cli.json {
                println!("{}", report.json);
            } else {
                print!("{}", report.text);
            }
            EXIT_OK
        }
        Err(e) => fail(e),
    }
}
