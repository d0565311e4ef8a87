mod args;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Usage(#[from] clap::Error),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] pdwg::Error),
    #[error("cannot write {0}: {1}")]
    Output(PathBuf, std::io::Error),
}

fn main() -> ExitCode {
    let cli = match args::parse(std::env::args().collect()) {
        Ok(cli) => cli,
        Err(CliError::Usage(e)) => e.exit(),
        Err(e) => {
            eprintln!("pdwg: {e}");
            return ExitCode::from(2);
        }
    };
    let workers = cli.command.options().workers.max(1);
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
        eprintln!("pdwg: cannot start {workers} worker threads: {e}");
        return ExitCode::from(2);
    }
    match commands::run(&cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("pdwg {}: {e}", cli.command.name());
            ExitCode::from(2)
        }
    }
}
