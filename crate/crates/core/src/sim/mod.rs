//! Seeded end-to-end runs tying the modem, channel, protocol and radio
//! models together.

mod engine;
mod scenario;
mod sweep;

use thiserror::Error;

use crate::css::ModemError;
use crate::mimo::ChannelError;
use crate::protocol::ProtocolError;
use crate::radio::{PlanReport, RadioError};

pub use engine::{
    analytic_summary, run, waveform_airtime_ms, AnalyticSummary, ChannelSummary, Delivery, LinkMetrics, RunOutput,
    RunReport, TargetDelta, WaveformMedium,
};
pub use scenario::{MessageSpec, Mode, Scenario, Targets};
pub use sweep::{sweep, SweepAxes, SweepMetrics, SweepRow, ERROR_MARKER, SWEEP_CSV_HEADER};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("invalid frequency plan:\n{0}")]
    Plan(PlanReport),
    #[error(transparent)]
    Modem(#[from] ModemError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Radio(#[from] RadioError),
}
