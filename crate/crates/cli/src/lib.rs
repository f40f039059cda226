//! Command-line front end and HTTP service for the `gbs-core` toolkit.

pub mod commands;
pub mod model;
pub mod service;

pub use commands::{run, Cli, Command};

/// Sends logs to standard error, filtered by `GBS_LOG` (default `default`).
pub fn init_logging(default: &str) {
    let filter = tracing_subscriber::EnvFilter::try_from_env("GBS_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}
