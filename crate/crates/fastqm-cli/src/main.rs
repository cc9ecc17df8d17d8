//! `fastqm` — build and evaluate quadratic-manifold approximations of
//! snapshot data from the command line.
//!
//! Pipeline: `synth` (optional) → `svd` → `fit` → `eval`, with `sweep` and
//! `rotation-sweep` for parameter studies. Exit codes: 0 success, 1 usage or
//! validation error, 2 I/O or file-format error, 3 numerical failure.

mod commands;
mod config;

use clap::error::ErrorKind;
use clap::Parser;
use fastqm::Error;

use commands::Cli;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_) => 1,
        Error::Io(_) | Error::Format(_) => 2,
        Error::Numerical { .. } => 3,
    }
}
