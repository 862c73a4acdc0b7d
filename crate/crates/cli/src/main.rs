use std::process::ExitCode;

use clap::Parser;
use histrel_cli::cli::{run, Cli};
use histrel_core::ApiError;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_max_level(tracing::Level::WARN)
        .with_writer(std::io::stderr)
        .init();
    // usage errors exit 2 inside clap
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let api = ApiError::from(&e);
            eprintln!("error[{}]: {}", api.code.as_str(), api.message);
            if let Some(d) = api.detail {
                eprintln!("  {d}");
            }
            ExitCode::FAILURE
        }
    }
}
