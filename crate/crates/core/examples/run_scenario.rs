//! Runs a scenario file and prints its report.
//!
//!     cargo run --example run_scenario -- scenarios/channel_rates.toml

use std::path::PathBuf;

use lora_mimo::sim::{run, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path: PathBuf = std::env::args_os()
        .nth(1)
        .ok_or("usage: run_scenario <scenario.toml|json>")?
        .into();
    let scenario = Scenario::load(&path)?;
    let out = run(&scenario)?;
    println!("{}", serde_json::to_string_pretty(&out.report)?);
    Ok(())
}
