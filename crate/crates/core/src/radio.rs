//! Analytic link models: bitrate, aggregate throughput, serialization delay,
//! frequency-plan checks and current draw.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::css::{cross_correlation, symbol_duration, ChirpParams};

pub const MAX_TX_POWER_DBM: f64 = 20.0;
pub const DEFAULT_GUARD_HZ: f64 = 25_000.0;
/// Largest same-carrier correlation accepted by [`validate_plan`].
pub const ORTHOGONALITY_THRESHOLD: f64 = 0.2;

/// Published measurements the models are calibrated against.
pub mod reference {
    /// `(sf, bw, cr, bytes, measured delay ms)` for the four single-link runs.
    /// The (sf, bw) behind each rate is inferred from the bitrate formula.
    pub const MEASURED_DELAYS: [(u8, u32, u8, usize, f64); 4] = [
        (6, 500_000, 1, 240, 67.0),
        (7, 500_000, 1, 240, 112.0),
        (6, 250_000, 1, 240, 125.0),
        (8, 500_000, 1, 240, 197.0),
    ];
    /// Observed per-pair channel rates of the four-stream system, bps.
    pub const MEASURED_CHANNEL_RATES_BPS: [f64; 4] = [36_000.0, 20_250.0, 18_000.0, 11_000.0];
    /// Extra arrival delay of the second packet pair at the receiver.
    pub const RX_STAGGER_MS: f64 = 21.0;
    pub const IDLE_PAIR_MA: f64 = 45.0;
    pub const RX_ACTIVE_PAIR_MA: f64 = 80.0;
    /// Peak pair current at sf 8 with a 240-byte payload.
    pub const TX_PEAK_PAIR_MA: f64 = 137.0;
    pub const TX_PEAK_SF: u8 = 8;
    pub const TX_PEAK_PAYLOAD: u16 = 240;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RadioError {
    #[error("expected exactly 4 rates, got {0}")]
    Arity(usize),
    #[error("rate {0} is negative or not finite")]
    InvalidRate(f64),
    #[error("tx power {0} dBm exceeds {MAX_TX_POWER_DBM} dBm")]
    TxPower(f64),
    #[error("payload_bytes {0} outside 1..=255")]
    PayloadBytes(u16),
    #[error("invalid current model: {0}")]
    CurrentModel(String),
    #[error("no current table entry for sf {0}")]
    CurrentSf(u8),
    #[error("payload {payload} bytes outside current table range {min}..={max} for sf {sf}")]
    CurrentPayload { sf: u8, payload: u16, min: u16, max: u16 },
}

/// Per-link radio configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLinkConfig")]
pub struct LinkConfig {
    pub chirp: ChirpParams,
    pub tx_power_dbm: f64,
    pub payload_bytes: u16,
    /// Fixed per-packet delay on top of ideal serialization, ms.
    pub overhead_ms: f64,
    pub enabled: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLinkConfig {
    chirp: ChirpParams,
    #[serde(default = "default_tx_power")]
    tx_power_dbm: f64,
    payload_bytes: u16,
    #[serde(default)]
    overhead_ms: f64,
    #[serde(default = "default_enabled")]
    enabled: bool,
}

fn default_tx_power() -> f64 {
    MAX_TX_POWER_DBM
}

fn default_enabled() -> bool {
    true
}

impl TryFrom<RawLinkConfig> for LinkConfig {
    type Error = RadioError;

    fn try_from(raw: RawLinkConfig) -> Result<Self, Self::Error> {
        let mut link = LinkConfig::new(raw.chirp, raw.tx_power_dbm, raw.payload_bytes)?;
        link.overhead_ms = raw.overhead_ms;
        link.enabled = raw.enabled;
        Ok(link)
    }
}

impl LinkConfig {
    pub fn new(chirp: ChirpParams, tx_power_dbm: f64, payload_bytes: u16) -> Result<Self, RadioError> {
        if tx_power_dbm.is_nan() || tx_power_dbm > MAX_TX_POWER_DBM {
            return Err(RadioError::TxPower(tx_power_dbm));
        }
        if !(1..=255).contains(&payload_bytes) {
            return Err(RadioError::PayloadBytes(payload_bytes));
        }
        Ok(Self {
            chirp,
            tx_power_dbm,
            payload_bytes,
            overhead_ms: 0.0,
            enabled: true,
        })
    }

    pub fn with_overhead(mut self, overhead_ms: f64) -> Self {
        self.overhead_ms = overhead_ms;
        self
    }
}

/// SISO bitrate `4 * sf * bw / ((4 + cr) * 2^sf)` in bps.
pub fn bitrate(chirp: &ChirpParams) -> f64 {
    // Numerator and denominator are exact integers, so the single division is
    // correctly rounded.
    let num = 4 * chirp.sf() as u64 * chirp.bw() as u64;
    let den = (4 + chirp.cr() as u64) << chirp.sf();
    num as f64 / den as f64
}

/// Sum of the four per-stream rates.
pub fn aggregate_throughput(rates: &[f64]) -> Result<f64, RadioError> {
    if rates.len() != 4 {
        return Err(RadioError::Arity(rates.len()));
    }
    if let Some(&bad) = rates.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(RadioError::InvalidRate(bad));
    }
    Ok(rates.iter().sum())
}

/// Ideal serialization time of `total_bytes` plus a fixed overhead, in ms.
pub fn transmission_delay(config: &LinkConfig, total_bytes: usize, overhead_ms: f64) -> f64 {
    debug_assert!(total_bytes >= 1);
    total_bytes as f64 * 8.0 / bitrate(&config.chirp) * 1000.0 + overhead_ms
}

/// Overhead that makes [`transmission_delay`] reproduce a measured delay.
pub fn fit_overhead(config: &LinkConfig, total_bytes: usize, measured_ms: f64) -> f64 {
    measured_ms - transmission_delay(config, total_bytes, 0.0)
}

/// Carrier assignment for the four transmit radios and the four receive radios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPlan {
    pub tx_freqs: [f64; 4],
    pub rx_freqs: [f64; 4],
    #[serde(default = "default_guard")]
    pub guard_hz: f64,
}

fn default_guard() -> f64 {
    DEFAULT_GUARD_HZ
}

impl FrequencyPlan {
    /// Receive side tuned to the same carriers as the transmit side.
    pub fn symmetric(freqs: [f64; 4]) -> Self {
        Self {
            tx_freqs: freqs,
            rx_freqs: freqs,
            guard_hz: DEFAULT_GUARD_HZ,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanViolation {
    /// `tx_freqs[index + 1] < tx_freqs[index]`.
    TxOrdering {
        index: usize,
    },
    RxOrdering {
        index: usize,
    },
    TxRxMismatch {
        index: usize,
        tx_hz: f64,
        rx_hz: f64,
    },
    SpectralOverlap {
        a: usize,
        b: usize,
        separation_hz: f64,
        required_hz: f64,
    },
    SharedCarrier {
        a: usize,
        b: usize,
        correlation: f64,
        threshold: f64,
    },
    NonFinite {
        index: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct PlanReport {
    pub violations: Vec<PlanViolation>,
}

impl PlanReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for PlanReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "frequency plan valid");
        }
        for (n, v) in self.violations.iter().enumerate() {
            if n > 0 {
                writeln!(f)?;
            }
            match v {
                PlanViolation::TxOrdering { index } => {
                    write!(f, "ordering violation: tx f{} is below f{}", index + 2, index + 1)?
                }
                PlanViolation::RxOrdering { index } => {
                    write!(f, "ordering violation: rx f{} is below f{}", index + 6, index + 5)?
                }
                PlanViolation::TxRxMismatch { index, tx_hz, rx_hz } => {
                    write!(f, "tx/rx mismatch on link {}: {tx_hz} Hz vs {rx_hz} Hz", index + 1)?
                }
                PlanViolation::SpectralOverlap {
                    a,
                    b,
                    separation_hz,
                    required_hz,
                } => write!(
                    f,
                    "spectral overlap between links {} and {}: {separation_hz} Hz apart, need {required_hz} Hz",
                    a + 1,
                    b + 1
                )?,
                PlanViolation::SharedCarrier {
                    a,
                    b,
                    correlation,
                    threshold,
                } => write!(
                    f,
                    "links {} and {} share a carrier with correlation {correlation:.4} >= {threshold}",
                    a + 1,
                    b + 1
                )?,
                PlanViolation::NonFinite { index } => write!(f, "carrier {} is not a finite frequency", index + 1)?,
            }
        }
        Ok(())
    }
}

pub fn validate_plan(plan: &FrequencyPlan, chirps: &[ChirpParams; 4]) -> PlanReport {
    validate_plan_with(plan, chirps, ORTHOGONALITY_THRESHOLD)
}

/// Checks carrier ordering, tx/rx pairing and spectral separation. Two links
/// may share a carrier only if their chirps correlate below `threshold`;
/// carriers that differ must be at least `max(bw)/2 + guard` apart.
pub fn validate_plan_with(plan: &FrequencyPlan, chirps: &[ChirpParams; 4], threshold: f64) -> PlanReport {
    let mut violations = Vec::new();
    let freqs = plan.tx_freqs.iter().chain(&plan.rx_freqs);
    if let Some(index) = freqs.clone().position(|f| !f.is_finite()) {
        violations.push(PlanViolation::NonFinite { index: index % 4 });
        return PlanReport { violations };
    }
    for i in 0..3 {
        if plan.tx_freqs[i + 1] < plan.tx_freqs[i] {
            violations.push(PlanViolation::TxOrdering { index: i });
        }
        if plan.rx_freqs[i + 1] < plan.rx_freqs[i] {
            violations.push(PlanViolation::RxOrdering { index: i });
        }
    }
    for i in 0..4 {
        if plan.tx_freqs[i] != plan.rx_freqs[i] {
            violations.push(PlanViolation::TxRxMismatch {
                index: i,
                tx_hz: plan.tx_freqs[i],
                rx_hz: plan.rx_freqs[i],
            });
        }
    }
    for a in 0..4 {
        for b in a + 1..4 {
            let separation = (plan.tx_freqs[a] - plan.tx_freqs[b]).abs();
            if separation == 0.0 {
                let correlation = cross_correlation(&chirps[a], &chirps[b]);
                if correlation >= threshold {
                    violations.push(PlanViolation::SharedCarrier {
                        a,
                        b,
                        correlation,
                        threshold,
                    });
                }
                continue;
            }
            let required = chirps[a].bw().max(chirps[b].bw()) as f64 / 2.0 + plan.guard_hz;
            if separation < required {
                violations.push(PlanViolation::SpectralOverlap {
                    a,
                    b,
                    separation_hz: separation,
                    required_hz: required,
                });
            }
        }
    }
    PlanReport { violations }
}

/// One row of a bitrate table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub sf: u8,
    pub bw_hz: u32,
    pub cr: u8,
    pub bitrate_bps: f64,
    pub symbol_ms: f64,
}

/// Bitrate over the Cartesian product of the given values, sf-major.
pub fn rate_table(sfs: &[u8], bws: &[u32], crs: &[u8]) -> Result<Vec<RateRow>, crate::css::ModemError> {
    let mut rows = Vec::with_capacity(sfs.len() * bws.len() * crs.len());
    for &sf in sfs {
        for &bw in bws {
            for &cr in crs {
                let chirp = ChirpParams::baseband(sf, bw, cr)?;
                rows.push(RateRow {
                    sf,
                    bw_hz: bw,
                    cr,
                    bitrate_bps: bitrate(&chirp),
                    symbol_ms: symbol_duration(&chirp) * 1000.0,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RadioState {
    Idle,
    Rx,
    Tx { sf: u8, payload_bytes: u16 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentPoint {
    pub sf: u8,
    pub payload_bytes: u16,
    pub ma: f64,
}

/// Current draw of one pair of radios, in mA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCurrentModel", into = "RawCurrentModel")]
pub struct CurrentModel {
    idle_pair_ma: f64,
    rx_active_pair_ma: f64,
    /// sf -> payload -> mA
    tx_table: BTreeMap<u8, BTreeMap<u16, f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawCurrentModel {
    idle_pair_ma: f64,
    rx_active_pair_ma: f64,
    tx_table: Vec<CurrentPoint>,
}

impl TryFrom<RawCurrentModel> for CurrentModel {
    type Error = RadioError;

    fn try_from(raw: RawCurrentModel) -> Result<Self, Self::Error> {
        CurrentModel::new(raw.idle_pair_ma, raw.rx_active_pair_ma, &raw.tx_table)
    }
}

impl From<CurrentModel> for RawCurrentModel {
    fn from(m: CurrentModel) -> Self {
        RawCurrentModel {
            idle_pair_ma: m.idle_pair_ma,
            rx_active_pair_ma: m.rx_active_pair_ma,
            tx_table: m.points(),
        }
    }
}

impl CurrentModel {
    pub fn new(idle_pair_ma: f64, rx_active_pair_ma: f64, points: &[CurrentPoint]) -> Result<Self, RadioError> {
        let bad = |msg: String| Err(RadioError::CurrentModel(msg));
        if points.is_empty() {
            return bad("tx table is empty".into());
        }
        let mut tx_table: BTreeMap<u8, BTreeMap<u16, f64>> = BTreeMap::new();
        for p in points {
            if !p.ma.is_finite() || p.ma < 0.0 {
                return bad(format!("non-physical current {} mA", p.ma));
            }
            if tx_table
                .entry(p.sf)
                .or_default()
                .insert(p.payload_bytes, p.ma)
                .is_some()
            {
                return bad(format!("duplicate entry sf {} payload {}", p.sf, p.payload_bytes));
            }
        }
        let max_tx = points.iter().map(|p| p.ma).fold(f64::MIN, f64::max);
        if !(idle_pair_ma <= rx_active_pair_ma && rx_active_pair_ma <= max_tx) {
            return bad(format!(
                "need idle ({idle_pair_ma}) <= rx ({rx_active_pair_ma}) <= max tx ({max_tx})"
            ));
        }
        let model = Self {
            idle_pair_ma,
            rx_active_pair_ma,
            tx_table,
        };
        // Monotone in sf wherever two rows share a payload size.
        let sfs: Vec<u8> = model.tx_table.keys().copied().collect();
        for w in sfs.windows(2) {
            let (lo, hi) = (&model.tx_table[&w[0]], &model.tx_table[&w[1]]);
            for (payload, ma) in lo {
                if let Some(next) = hi.get(payload) {
                    if next < ma {
                        return bad(format!(
                            "tx current decreases from sf {} to sf {} at {payload} bytes",
                            w[0], w[1]
                        ));
                    }
                }
            }
        }
        Ok(model)
    }

    /// The three published anchors (idle 45 mA, rx 80 mA, tx 137 mA at sf 8 /
    /// 240 bytes) with tx rows for sf 6..=8 at 40 and 240 bytes laid on a
    /// linear ramp from the rx level up to the sf 8 / 240-byte peak, in steps
    /// of one third per sf and proportional to payload.
    pub fn published() -> Self {
        use reference::*;
        let mut points = Vec::new();
        for sf in 6..=TX_PEAK_SF {
            let sf_share = (sf - 5) as f64 / (TX_PEAK_SF - 5) as f64;
            for payload in [40u16, TX_PEAK_PAYLOAD] {
                let payload_share = payload as f64 / TX_PEAK_PAYLOAD as f64;
                let ma = RX_ACTIVE_PAIR_MA + (TX_PEAK_PAIR_MA - RX_ACTIVE_PAIR_MA) * sf_share * payload_share;
                points.push(CurrentPoint {
                    sf,
                    payload_bytes: payload,
                    ma,
                });
            }
        }
        Self::new(IDLE_PAIR_MA, RX_ACTIVE_PAIR_MA, &points).expect("published table is consistent")
    }

    pub fn idle_pair_ma(&self) -> f64 {
        self.idle_pair_ma
    }

    pub fn rx_active_pair_ma(&self) -> f64 {
        self.rx_active_pair_ma
    }

    pub fn points(&self) -> Vec<CurrentPoint> {
        self.tx_table
            .iter()
            .flat_map(|(&sf, row)| {
                row.iter()
                    .map(move |(&payload_bytes, &ma)| CurrentPoint { sf, payload_bytes, ma })
            })
            .collect()
    }

    pub fn payload_range(&self, sf: u8) -> Option<(u16, u16)> {
        let row = self.tx_table.get(&sf)?;
        Some((*row.keys().next()?, *row.keys().next_back()?))
    }
}

impl Default for CurrentModel {
    fn default() -> Self {
        Self::published()
    }
}

/// Pair current for a radio state; tx values interpolate linearly in payload.
pub fn current_draw(model: &CurrentModel, state: RadioState) -> Result<f64, RadioError> {
    match state {
        RadioState::Idle => Ok(model.idle_pair_ma),
        RadioState::Rx => Ok(model.rx_active_pair_ma),
        RadioState::Tx { sf, payload_bytes } => {
            let row = model.tx_table.get(&sf).ok_or(RadioError::CurrentSf(sf))?;
            if let Some(&ma) = row.get(&payload_bytes) {
                return Ok(ma);
            }
            let below = row.range(..payload_bytes).next_back();
            let above = row.range(payload_bytes..).next();
            match (below, above) {
                (Some((&p0, &i0)), Some((&p1, &i1))) => {
                    let t = (payload_bytes - p0) as f64 / (p1 - p0) as f64;
                    Ok(i0 + t * (i1 - i0))
                }
                _ => {
                    let (min, max) = model.payload_range(sf).expect("row is non-empty");
                    Err(RadioError::CurrentPayload {
                        sf,
                        payload: payload_bytes,
                        min,
                        max,
                    })
                }
            }
        }
    }
}
