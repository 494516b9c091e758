mod analyze;
mod bench;
mod kb;
mod serve;
mod simulate;
mod stats;

use std::fs::File;
use std::path::Path;

use anyhow::{Context, Result};

use crate::args::{Cli, Command};
use crate::output::Output;

/// Runs one parsed command line. `serve` blocks until interrupted.
pub fn run(cli: Cli) -> Result<Output> {
    let machine = cli.machine_readable;
    match cli.command {
        Command::Serve(args) => serve::run(args),
        Command::Kb(cmd) => kb::run(cmd, machine),
        Command::Simulate(args) => simulate::run(args, machine),
        Command::Bench(args) => bench::run(args, machine),
        Command::Analyze(args) => analyze::run(args, machine),
        Command::Stats(args) => stats::run(args, machine),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("cannot open {}", path.display()))
}
