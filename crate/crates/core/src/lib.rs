//! Link-level simulator and protocol library for a 4x4 spatially multiplexed
//! LoRa system.
//!
//! - [`css`]: chirp spread spectrum modulation and demodulation.
//! - [`mimo`]: channel realisation, SVD precoding and post-processing.
//! - [`radio`]: bitrate, delay, frequency plan and current models.
//! - [`protocol`]: slicing, dispatch and reassembly across four radios.
//! - [`sim`]: seeded end-to-end runs and parameter sweeps.

#![allow(clippy::needless_range_loop)]

pub mod css;
pub mod mimo;
pub mod protocol;
pub mod radio;
pub mod sim;

pub use css::{ChirpParams, ModemError};
pub use mimo::{ChannelError, ChannelMatrix, ChannelModel, SvdFactors};
pub use protocol::{Event, Packet, PacketHeader, ProtocolError, RadioId};
pub use radio::{CurrentModel, FrequencyPlan, LinkConfig, PlanReport, RadioError, RadioState};
pub use sim::{LinkMetrics, RunReport, Scenario, SimError};
