use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::css::ChirpParams;
use crate::mimo::ChannelModel;
use crate::protocol::{UartModel, MAX_MSG_ID};
use crate::radio::{validate_plan, CurrentModel, FrequencyPlan, LinkConfig};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Closed-form rates and delays over a lossless protocol run.
    #[default]
    Analytic,
    /// Every frame is modulated, sent through the MIMO channel and demodulated.
    Waveform,
}

/// Message to transfer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MessageSpec {
    Text(String),
    Hex(String),
    /// That many bytes drawn from the scenario seed.
    Random(usize),
}

impl MessageSpec {
    pub fn resolve(&self, seed: u64) -> Result<Vec<u8>, SimError> {
        let bytes = match self {
            MessageSpec::Text(s) => s.as_bytes().to_vec(),
            MessageSpec::Hex(s) => hex::decode(s.trim()).map_err(|e| SimError::Config(format!("message hex: {e}")))?,
            MessageSpec::Random(len) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(MESSAGE_STREAM);
                let mut out = vec![0u8; *len];
                rng.fill_bytes(&mut out);
                out
            }
        };
        if bytes.is_empty() {
            return Err(SimError::Config("message is empty".into()));
        }
        Ok(bytes)
    }
}

/// ChaCha stream ids keep the message and noise draws independent.
pub(crate) const MESSAGE_STREAM: u64 = 1;
pub(crate) const NOISE_STREAM: u64 = 2;

/// Reference measurements a run is compared against.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Targets {
    pub per_stream_bps: Option<[f64; 4]>,
    pub aggregate_bps: Option<f64>,
    /// Single-link delay for the whole message on each link.
    pub link_delay_ms: Option<[f64; 4]>,
    pub rx_stagger_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub links: [LinkConfig; 4],
    pub plan: FrequencyPlan,
    #[serde(default = "default_channel")]
    pub channel: ChannelModel,
    pub snr_db: f64,
    pub message: MessageSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_true")]
    pub precoding: bool,
    #[serde(default)]
    pub msg_id: u16,
    #[serde(default)]
    pub uart: UartModel,
    #[serde(default)]
    pub current: CurrentModel,
    #[serde(default)]
    pub targets: Targets,
}

fn default_name() -> String {
    "scenario".into()
}

fn default_channel() -> ChannelModel {
    ChannelModel::Identity
}

fn default_true() -> bool {
    true
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Parse(e.to_string()))
    }

    /// Reads a `.toml` or `.json` file; other extensions are tried as JSON
    /// first, then TOML.
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Parse(format!("{}: {e}", path.display())))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml_str(&text),
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_json_str(&text).or_else(|_| Self::from_toml_str(&text)),
        }
    }

    /// Link chirps tuned to their transmit carriers.
    pub fn chirps(&self) -> Result<[ChirpParams; 4], SimError> {
        let mut out = [self.links[0].chirp; 4];
        for (i, link) in self.links.iter().enumerate() {
            out[i] = link.chirp.with_carrier(self.plan.tx_freqs[i])?;
        }
        Ok(out)
    }

    pub fn enabled(&self) -> [bool; 4] {
        self.links.map(|l| l.enabled)
    }

    /// Chunk size shared by every enabled link.
    pub fn chunk_payload(&self) -> usize {
        self.links
            .iter()
            .find(|l| l.enabled)
            .map_or(self.links[0].payload_bytes, |l| l.payload_bytes) as usize
    }

    /// Checks everything a run relies on and returns the tuned chirps.
    pub fn validate(&self) -> Result<[ChirpParams; 4], SimError> {
        if !self.snr_db.is_finite() {
            return Err(SimError::Config(format!("snr_db must be finite, got {}", self.snr_db)));
        }
        if self.msg_id > MAX_MSG_ID {
            return Err(SimError::Config(format!("msg_id {} exceeds {MAX_MSG_ID}", self.msg_id)));
        }
        if !self.links.iter().any(|l| l.enabled) {
            return Err(SimError::Config("no enabled links".into()));
        }
        let chunk = self.chunk_payload();
        if let Some(i) = (0..4).find(|&i| self.links[i].enabled && self.links[i].payload_bytes as usize != chunk) {
            return Err(SimError::Config(format!(
                "link {} payload_bytes {} differs from {chunk}; enabled links must share one chunk size",
                i + 1,
                self.links[i].payload_bytes
            )));
        }
        if let Some(i) = (0..4).find(|&i| !(self.links[i].overhead_ms.is_finite() && self.links[i].overhead_ms >= 0.0))
        {
            return Err(SimError::Config(format!(
                "link {} overhead_ms must be finite and non-negative",
                i + 1
            )));
        }
        let chirps = self.chirps()?;
        let report = validate_plan(&self.plan, &chirps);
        if !report.is_valid() {
            return Err(SimError::Plan(report));
        }
        Ok(chirps)
    }
}
