mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use config::Cli;

/// A broken internal invariant, reported with exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("internal invariant violated: {0}")]
pub struct InvariantViolation(pub String);

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match std::panic::catch_unwind(|| commands::run(cli)) {
        Ok(Ok(code)) => ExitCode::from(code),
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<InvariantViolation>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
        Err(_) => ExitCode::from(2),
    }
}
