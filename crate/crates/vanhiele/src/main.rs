use std::process::ExitCode;

use clap::Parser;
use tracing_subscriber::EnvFilter;
use vanhiele::cli::{self, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default)))
        .init();
    ExitCode::from(cli::run(cli))
}
