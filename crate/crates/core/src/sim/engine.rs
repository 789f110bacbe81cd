use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::css::{bytes_to_symbols, modulate_all, symbol_duration, symbols_to_bytes, ChirpParams, Demodulator};
use crate::mimo::{generate_channel, svd, ChannelMatrix, SvdFactors, DIM, STREAM_GAIN_FLOOR};
use crate::protocol::{
    run_transfer, rx_stagger, Event, Lossless, Medium, Packet, RadioId, Transfer, Transmission, TX_RADIOS,
};
use crate::radio::{bitrate, current_draw, transmission_delay, LinkConfig, RadioState};

use super::scenario::{Mode, Scenario, NOISE_STREAM};
use super::SimError;

/// Per-run metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkMetrics {
    pub per_stream_bitrate_bps: [f64; 4],
    pub aggregate_bps: f64,
    /// Time from the first control frame to the last receive-side event.
    pub tx_delay_ms: f64,
    /// `None` when the first data batch did not arrive complete.
    pub rx_stagger_ms: Option<f64>,
    pub ber: f64,
    /// Peak transmit pair current; `None` when outside the current table.
    pub est_current_ma: Option<f64>,
    pub packets_sent: usize,
    pub packets_received: usize,
    pub packets_lost: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Delivery {
    Delivered,
    Incomplete {
        missing: Vec<u16>,
    },
    /// All chunks arrived but the reassembled bytes differ from the original.
    Corrupted,
    Integrity {
        errors: Vec<String>,
    },
}

/// Closed-form figures for the scenario's links.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticSummary {
    pub per_stream_bitrate_bps: [f64; 4],
    pub aggregate_bps: f64,
    /// Whole message sent on each link alone, including its overhead.
    pub link_delay_ms: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelSummary {
    pub sigma: [f64; 4],
    pub live_streams: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetDelta {
    pub metric: String,
    pub target: f64,
    pub model: f64,
    pub delta: f64,
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub mode: Mode,
    pub seed: u64,
    pub precoding: bool,
    pub message_bytes: usize,
    pub chunk_payload: usize,
    pub metrics: LinkMetrics,
    pub delivery: Delivery,
    pub analytic: AnalyticSummary,
    pub channel: ChannelSummary,
    pub targets: Vec<TargetDelta>,
}

impl RunReport {
    pub fn delivered(&self) -> bool {
        self.delivery == Delivery::Delivered
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub events: Vec<Event>,
}

/// Runs one scenario. Identical scenarios give identical output.
pub fn run(scenario: &Scenario) -> Result<RunOutput, SimError> {
    let chirps = scenario.validate()?;
    let h = generate_channel(&scenario.channel)?;
    let factors = svd(&h)?;
    let message = scenario.message.resolve(scenario.seed)?;
    let enabled = scenario.enabled();
    let radios: Vec<RadioId> = TX_RADIOS.iter().copied().filter(|r| enabled[r.slot()]).collect();
    let chunk = scenario.chunk_payload();
    let links = scenario.links;

    let analytic = analytic_summary(&links, message.len());
    let live: [bool; 4] = std::array::from_fn(|i| factors.sigma[i] > STREAM_GAIN_FLOOR);

    let (transfer, per_stream, ber) = match scenario.mode {
        Mode::Analytic => {
            let mut medium = Lossless {
                airtime: |r: RadioId, p: &Packet| analytic_airtime(&links[r.slot()], p),
            };
            let t = run_transfer(&message, scenario.msg_id, chunk, &radios, scenario.uart, &mut medium)?;
            (t, analytic.per_stream_bitrate_bps, 0.0)
        }
        Mode::Waveform => {
            let mut medium = WaveformMedium::new(scenario, chirps, h, factors);
            let t = run_transfer(&message, scenario.msg_id, chunk, &radios, scenario.uart, &mut medium)?;
            let per_stream = goodput(&t, &medium, &live);
            (t, per_stream, medium.ber())
        }
    };

    let packets_sent = transfer.sent.len();
    let packets_received = transfer
        .sent
        .iter()
        .zip(&transfer.decoded)
        .filter(|(tx, rx)| rx.as_ref() == Some(&tx.packet))
        .count();
    let est_current_ma = (0..4)
        .filter(|&i| enabled[i])
        .map(|i| {
            current_draw(
                &scenario.current,
                RadioState::Tx {
                    sf: links[i].chirp.sf(),
                    payload_bytes: links[i].payload_bytes,
                },
            )
        })
        .try_fold(f64::NEG_INFINITY, |acc, r| r.map(|ma| acc.max(ma)))
        .ok();
    let metrics = LinkMetrics {
        per_stream_bitrate_bps: per_stream,
        aggregate_bps: per_stream.iter().sum(),
        tx_delay_ms: transfer.finished_ms,
        rx_stagger_ms: rx_stagger(&transfer.events).ok(),
        ber,
        est_current_ma,
        packets_sent,
        packets_received,
        packets_lost: packets_sent - packets_received,
    };
    let delivery = delivery(&transfer, &message);
    let targets = target_deltas(scenario, &metrics, &analytic);
    let report = RunReport {
        scenario: scenario.name.clone(),
        mode: scenario.mode,
        seed: scenario.seed,
        precoding: scenario.precoding,
        message_bytes: message.len(),
        chunk_payload: chunk,
        metrics,
        delivery,
        analytic,
        channel: ChannelSummary {
            sigma: factors.sigma,
            live_streams: live.iter().filter(|&&l| l).count(),
        },
        targets,
    };
    Ok(RunOutput {
        report,
        events: transfer.events,
    })
}

pub fn analytic_summary(links: &[LinkConfig; 4], message_len: usize) -> AnalyticSummary {
    let per_stream = links.map(|l| if l.enabled { bitrate(&l.chirp) } else { 0.0 });
    AnalyticSummary {
        per_stream_bitrate_bps: per_stream,
        aggregate_bps: per_stream.iter().sum(),
        link_delay_ms: links.map(|l| transmission_delay(&l, message_len, l.overhead_ms)),
    }
}

fn analytic_airtime(link: &LinkConfig, packet: &Packet) -> f64 {
    transmission_delay(link, packet.wire_len(), link.overhead_ms)
}

/// On-air time of a frame: whole symbols at the coded rate plus overhead.
pub fn waveform_airtime_ms(link: &LinkConfig, wire_bytes: usize) -> f64 {
    let chirp = &link.chirp;
    let symbols = (wire_bytes * 8).div_ceil(chirp.sf() as usize);
    let coded = (4 + chirp.cr() as usize) as f64 / 4.0;
    symbols as f64 * symbol_duration(chirp) * coded * 1000.0 + link.overhead_ms
}

fn delivery(transfer: &Transfer, message: &[u8]) -> Delivery {
    if !transfer.rx.errors.is_empty() {
        return Delivery::Integrity {
            errors: transfer.rx.errors.iter().map(|e| e.to_string()).collect(),
        };
    }
    match transfer.message() {
        Ok(bytes) if bytes == message => Delivery::Delivered,
        Ok(_) => Delivery::Corrupted,
        Err(crate::protocol::ProtocolError::Incomplete { missing, .. }) => Delivery::Incomplete { missing },
        Err(e) => Delivery::Integrity {
            errors: vec![e.to_string()],
        },
    }
}

/// Per-stream payload goodput: correctly delivered payload bits over the
/// airtime share spent on payload, so header and padding drop out.
fn goodput(transfer: &Transfer, medium: &WaveformMedium, live: &[bool; 4]) -> [f64; 4] {
    let mut bits = [0.0; 4];
    let mut time_s = [0.0; 4];
    for (tx, rx) in transfer.sent.iter().zip(&transfer.decoded) {
        let slot = tx.radio.slot();
        let payload_bits = tx.packet.header.payload_len as f64 * 8.0;
        let wire_bits = tx.packet.wire_len() as f64 * 8.0;
        let airtime = medium.airtime_ms(tx.radio, &tx.packet) / 1000.0;
        time_s[slot] += airtime * payload_bits / wire_bits;
        if rx.as_ref() == Some(&tx.packet) {
            bits[slot] += payload_bits;
        }
    }
    std::array::from_fn(|i| {
        if live[i] && time_s[i] > 0.0 {
            bits[i] / time_s[i]
        } else {
            0.0
        }
    })
}

fn target_deltas(scenario: &Scenario, metrics: &LinkMetrics, analytic: &AnalyticSummary) -> Vec<TargetDelta> {
    let mut out = Vec::new();
    let mut push = |metric: String, target: f64, model: f64| {
        let delta = model - target;
        out.push(TargetDelta {
            metric,
            target,
            model,
            delta,
            relative: if target != 0.0 { delta / target } else { 0.0 },
        });
    };
    let t = &scenario.targets;
    if let Some(v) = t.per_stream_bps {
        for i in 0..4 {
            push(format!("stream{}_bps", i + 1), v[i], metrics.per_stream_bitrate_bps[i]);
        }
        for i in 0..4 {
            push(
                format!("stream{}_analytic_bps", i + 1),
                v[i],
                analytic.per_stream_bitrate_bps[i],
            );
        }
    }
    if let Some(v) = t.aggregate_bps {
        push("aggregate_bps".into(), v, metrics.aggregate_bps);
        push("aggregate_analytic_bps".into(), v, analytic.aggregate_bps);
    }
    if let Some(v) = t.link_delay_ms {
        for i in 0..4 {
            push(format!("link{}_delay_ms", i + 1), v[i], analytic.link_delay_ms[i]);
        }
    }
    if let (Some(v), Some(m)) = (t.rx_stagger_ms, metrics.rx_stagger_ms) {
        push("rx_stagger_ms".into(), v, m);
    }
    out
}

/// Frames sent together share the 4x4 channel sample by sample. Streams are
/// the per-radio basebands, optionally precoded with `V`; the receiver
/// applies `U^H` and scales each stream by `1 / sigma_i`. Noise is drawn in
/// the eigen-domain with variance `sigma_i^2 / snr` and mapped back with `U`,
/// so every live eigen-channel sees the configured SNR.
pub struct WaveformMedium {
    links: [LinkConfig; 4],
    chirps: [ChirpParams; 4],
    demods: [Demodulator; 4],
    h: ChannelMatrix,
    factors: SvdFactors,
    precoding: bool,
    snr: f64,
    rng: ChaCha8Rng,
    bit_errors: usize,
    bits: usize,
}

impl WaveformMedium {
    pub fn new(scenario: &Scenario, chirps: [ChirpParams; 4], h: ChannelMatrix, factors: SvdFactors) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        rng.set_stream(NOISE_STREAM);
        Self {
            links: scenario.links,
            chirps,
            demods: chirps.map(|c| Demodulator::new(&c)),
            h,
            factors,
            precoding: scenario.precoding,
            snr: 10f64.powf(scenario.snr_db / 10.0),
            rng,
            bit_errors: 0,
            bits: 0,
        }
    }

    /// Bit error rate over data frames on live streams so far.
    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.bit_errors as f64 / self.bits as f64
        }
    }

    fn noise(&mut self, variance: f64) -> Complex64 {
        let sd = (variance / 2.0).sqrt();
        let re: f64 = StandardNormal.sample(&mut self.rng);
        let im: f64 = StandardNormal.sample(&mut self.rng);
        Complex64::new(re * sd, im * sd)
    }
}

impl Medium for WaveformMedium {
    fn airtime_ms(&self, radio: RadioId, packet: &Packet) -> f64 {
        waveform_airtime_ms(&self.links[radio.slot()], packet.wire_len())
    }

    fn carry(&mut self, batch: &[Transmission]) -> Vec<Option<Packet>> {
        let mut streams: [Vec<Complex64>; DIM] = Default::default();
        let mut wire: [Option<Vec<u8>>; DIM] = Default::default();
        for tx in batch {
            let slot = tx.radio.slot();
            let bytes = tx.packet.to_bytes();
            let sf = self.chirps[slot].sf();
            let signal = modulate_all(&self.chirps[slot], &bytes_to_symbols(&bytes, sf))
                .expect("symbols fit the spreading factor");
            streams[slot] = signal.samples;
            wire[slot] = Some(bytes);
        }
        let len = streams.iter().map(Vec::len).max().unwrap_or(0);
        let sigma = self.factors.sigma;
        let u = self.factors.u;
        let uh = u.adjoint();
        let mut out: [Vec<Complex64>; DIM] = std::array::from_fn(|i| Vec::with_capacity(streams[i].len()));
        let zero = Complex64::new(0.0, 0.0);
        for n in 0..len {
            let gt: [Complex64; DIM] = std::array::from_fn(|i| streams[i].get(n).copied().unwrap_or(zero));
            let gamma = if self.precoding {
                self.factors.v.mul_vec(&gt)
            } else {
                gt
            };
            let wt: [Complex64; DIM] = std::array::from_fn(|i| self.noise(sigma[i] * sigma[i] / self.snr));
            let w = u.mul_vec(&wt);
            let mut rho = self.h.matrix().mul_vec(&gamma);
            for (r, x) in rho.iter_mut().zip(w) {
                *r += x;
            }
            let rt = uh.mul_vec(&rho);
            for i in 0..DIM {
                if n < streams[i].len() && sigma[i] > STREAM_GAIN_FLOOR {
                    out[i].push(rt[i] / sigma[i]);
                }
            }
        }

        batch
            .iter()
            .map(|tx| {
                let slot = tx.radio.slot();
                if sigma[slot] <= STREAM_GAIN_FLOOR {
                    return None;
                }
                let sent = wire[slot].as_ref().expect("frame was modulated");
                let symbols = self.demods[slot].demodulate_stream(&out[slot]).ok()?;
                let bytes = symbols_to_bytes(&symbols, self.chirps[slot].sf(), sent.len());
                if !tx.packet.is_control() {
                    self.bits += sent.len() * 8;
                    self.bit_errors += sent
                        .iter()
                        .zip(&bytes)
                        .map(|(a, b)| (a ^ b).count_ones() as usize)
                        .sum::<usize>();
                }
                Packet::from_bytes(&bytes).ok()
            })
            .collect()
    }
}
