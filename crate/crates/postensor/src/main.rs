use std::process::ExitCode;

use clap::Parser;
use postensor::cli::Cli;
use postensor::commands;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match commands::run(cli.command) {
        Ok(paths) => {
            println!("{}", commands::summary(name, &paths));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
