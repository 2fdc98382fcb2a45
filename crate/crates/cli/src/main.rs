//! `clickintent`: simulate, ingest, train, evaluate, analyze, contrast,
//! tag and serve.
//!
//! Exit codes: 0 success, 1 runtime failure (one JSON error line on
//! stderr), 2 usage error.

mod commands;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = commands::Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({"error": e.kind(), "message": e.to_string()}));
            ExitCode::from(1)
        }
    }
}
