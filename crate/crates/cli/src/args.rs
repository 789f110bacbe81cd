use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

pub const SEED_ENV: &str = "LORA_MIMO_SEED";

#[derive(Debug, Parser)]
#[command(name = "lora-mimo", version, about = "4x4 MIMO LoRa link simulator")]
pub struct Cli {
    /// Print progress and summaries to stderr; repeat for more detail.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bitrate of one (sf, bw, cr) setting.
    Rate(RateArgs),
    /// Bitrate table over a parameter grid, or a scenario sweep with --scenario.
    Sweep(SweepArgs),
    /// Cross-correlation matrix between chirp configurations.
    Ortho(OrthoArgs),
    /// Singular value decomposition of a 4x4 channel.
    Svd(SvdArgs),
    /// Run one scenario end to end.
    Simulate(SimulateArgs),
    /// Monte-Carlo symbol and bit error rate over AWGN.
    Ber(BerArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
    Jsonl,
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Format::Text => "text",
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Jsonl => "jsonl",
        }
    }
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[arg(long)]
    pub sf: u8,
    /// Bandwidth in Hz.
    #[arg(long)]
    pub bw: u32,
    /// Coding-rate index: code rate 4/(4+cr).
    #[arg(long, default_value_t = 1)]
    pub cr: u8,
    /// text (default), csv or json.
    #[arg(long)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Spreading factors, e.g. `6-12`, `6..=8` or `6,7,8`.
    #[arg(long, value_parser = parse_sf_range)]
    pub sf_range: Option<SfRange>,
    /// Bandwidths in Hz, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub bw_set: Option<Vec<u32>>,
    /// Coding-rate indices, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub cr_set: Option<Vec<u8>>,
    /// Per-stream SNR values in dB (scenario sweeps only).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub snr_set: Option<Vec<f64>>,
    /// Base scenario (TOML or JSON); runs the simulator for every grid point.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    /// csv (default) or json.
    #[arg(long)]
    pub format: Option<Format>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SfRange(pub Vec<u8>);

#[derive(Debug, Args)]
pub struct OrthoArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [6u8, 7, 8])]
    pub sf_set: Vec<u8>,
    /// Bandwidths in Hz, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [125_000u32, 250_000, 500_000])]
    pub bw_set: Vec<u32>,
    /// Samples per chip.
    #[arg(long, default_value_t = 1)]
    pub oversample: usize,
    /// csv (default) or json.
    #[arg(long)]
    pub format: Option<Format>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(skip)]
#[command(group(ArgGroup::new("source").required(true).args(["channel", "rayleigh", "identity"])))]
pub struct SvdArgs {
    /// Channel matrix as JSON: 4 rows of 4 `[re, im]` pairs.
    #[arg(long)]
    pub channel: Option<PathBuf>,
    /// Seeded i.i.d. Rayleigh channel.
    #[arg(long)]
    pub rayleigh: Option<u64>,
    #[arg(long)]
    pub identity: bool,
    /// json (default) or csv.
    #[arg(long)]
    pub format: Option<Format>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario file (TOML or JSON).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Report output; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Event log output (JSON lines).
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    /// json (default) or jsonl (single-line report).
    #[arg(long)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct BerArgs {
    #[arg(long, default_value_t = 7)]
    pub sf: u8,
    #[arg(long, default_value_t = 125_000)]
    pub bw: u32,
    #[arg(long, default_value_t = 1)]
    pub cr: u8,
    #[arg(long, default_value_t = 1)]
    pub oversample: usize,
    /// SNR values in dB, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-10.0, -5.0, 0.0, 5.0, 10.0, 20.0])]
    pub snr_set: Vec<f64>,
    /// Symbols per SNR point.
    #[arg(long, default_value_t = 10_000)]
    pub symbols: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 1)]
    pub seed: u64,
    /// csv (default) or json.
    #[arg(long)]
    pub format: Option<Format>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Accepts `a-b`, `a..b`, `a..=b` (all inclusive) or a comma list.
pub fn parse_sf_range(text: &str) -> Result<SfRange, String> {
    let num = |s: &str| {
        s.trim()
            .parse::<u8>()
            .map_err(|_| format!("invalid sf value `{}`", s.trim()))
    };
    let bounds = text
        .split_once("..=")
        .or_else(|| text.split_once(".."))
        .or_else(|| text.split_once('-'));
    let values: Vec<u8> = match bounds {
        Some((lo, hi)) => {
            let (lo, hi) = (num(lo)?, num(hi)?);
            if lo > hi {
                return Err(format!("empty sf range {lo}..{hi}"));
            }
            (lo..=hi).collect()
        }
        None => text.split(',').map(num).collect::<Result<_, _>>()?,
    };
    Ok(SfRange(values))
}
