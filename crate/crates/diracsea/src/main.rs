use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use diracsea::config::{self, Cli};
use diracsea::{commands, output, CliError};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let env_out = std::env::var_os(config::OUT_ENV).map(PathBuf::from);
    let cfg = config::resolve(&cli.global, env_out)?;
    let start = Instant::now();
    let outcome = commands::run(&cfg, &cli.command)?;
    let dir = output::write_outcome(&cfg, cli.command.name(), &outcome, start.elapsed().as_secs_f64())?;
    println!("{}", dir.display());
    if !outcome.summary.is_null() {
        println!("{}", serde_json::to_string_pretty(&outcome.summary)?);
    }
    match outcome.failure {
        Some(msg) => Err(CliError::Numerical(msg)),
        None => Ok(()),
    }
}
