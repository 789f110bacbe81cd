mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Rate(a) => commands::rate(a),
        Command::Sweep(a) => commands::sweep_cmd(a, cli.verbose),
        Command::Ortho(a) => commands::ortho(a),
        Command::Svd(a) => commands::svd_cmd(a),
        Command::Simulate(a) => commands::simulate(a, cli.verbose),
        Command::Ber(a) => commands::ber(a, cli.verbose),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
