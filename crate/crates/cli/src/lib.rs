//! `vpsim` subcommands. Each command returns its stdout so it can be
//! exercised in-process; `main` only prints and sets the exit code.

pub mod args;
mod commands;
mod output;

pub use args::{Cli, Command, DEFAULT_SEED};
pub use commands::run;
pub use output::Output;
