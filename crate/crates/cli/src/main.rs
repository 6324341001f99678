use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;
mod config;
mod error;

use args::Cli;
use config::RunConfig;
use error::CliResult;

fn run(cli: &Cli) -> CliResult<std::path::PathBuf> {
    let cfg = RunConfig::resolve(&cli.command)?;
    commands::run(&cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(meta) => {
            eprintln!("wrote {}", meta.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
