use std::process::ExitCode;

use clap::Parser;
use complipay_cli::{run, Cli};

fn main() -> ExitCode {
    ExitCode::from(run(Cli::parse()) as u8)
}
