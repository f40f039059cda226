use std::process::ExitCode;

use clap::Parser;
use gbs_cli::{init_logging, run, Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(match cli.command {
        Command::Serve(_) => "info,tower_http=debug",
        _ => "warn",
    });
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
