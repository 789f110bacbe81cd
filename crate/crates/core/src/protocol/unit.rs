//! Master/slave radio units, UART forwarding and the event-level transfer
//! driver shared by the analytic and waveform simulations.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize, Serializer};

use super::packet::{notify_chunk_count, slice, Packet, HEADER_LEN};
use super::reassembly::{Accepted, Receiver};
use super::ProtocolError;

pub const STREAMS: usize = 4;

/// Logical radio `l1`..`l8`; 1-4 transmit, 5-8 receive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RadioId(u8);

impl RadioId {
    pub const fn new(n: u8) -> Option<Self> {
        if n >= 1 && n <= 8 {
            Some(Self(n))
        } else {
            None
        }
    }

    pub fn number(self) -> u8 {
        self.0
    }

    /// Position within its unit, 0..4.
    pub fn slot(self) -> usize {
        ((self.0 - 1) % 4) as usize
    }

    pub fn side(self) -> Side {
        if self.0 <= 4 {
            Side::Tx
        } else {
            Side::Rx
        }
    }

    /// The first two radios of each unit belong to the master.
    pub fn controller(self) -> Controller {
        if self.slot() < 2 {
            Controller::Master
        } else {
            Controller::Slave
        }
    }

    /// Receive radio tuned to the same carrier.
    pub fn peer(self) -> RadioId {
        match self.side() {
            Side::Tx => RadioId(self.0 + 4),
            Side::Rx => RadioId(self.0 - 4),
        }
    }

    pub fn label(self) -> String {
        format!("l{}", self.0)
    }
}

impl Serialize for RadioId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

pub const TX_RADIOS: [RadioId; STREAMS] = [RadioId(1), RadioId(2), RadioId(3), RadioId(4)];
pub const RX_RADIOS: [RadioId; STREAMS] = [RadioId(5), RadioId(6), RadioId(7), RadioId(8)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Tx,
    Rx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Controller {
    Master,
    Slave,
}

/// Serial link between master and slave, modeled as a fixed byte rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UartModel {
    pub bytes_per_second: f64,
}

impl UartModel {
    /// Forwarding two 67-byte frames (60-byte chunk plus header) takes 21 ms.
    pub const CALIBRATION_BYTES: usize = 2 * (60 + HEADER_LEN);
    pub const CALIBRATION_MS: f64 = 21.0;

    pub fn new(bytes_per_second: f64) -> Option<Self> {
        (bytes_per_second.is_finite() && bytes_per_second > 0.0).then_some(Self { bytes_per_second })
    }

    pub fn transfer_ms(&self, bytes: usize) -> f64 {
        bytes as f64 / self.bytes_per_second * 1000.0
    }
}

impl Default for UartModel {
    fn default() -> Self {
        Self {
            bytes_per_second: Self::CALIBRATION_BYTES as f64 / (Self::CALIBRATION_MS / 1000.0),
        }
    }
}

/// Packets of one batch bound to transmit radios, in radio order.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchPlan {
    pub assignments: Vec<(RadioId, Packet)>,
}

impl DispatchPlan {
    /// Packets the master must hand to the slave over UART.
    pub fn uart_share(&self) -> impl Iterator<Item = &(RadioId, Packet)> {
        self.assignments
            .iter()
            .filter(|(r, _)| r.controller() == Controller::Slave)
    }

    pub fn master_share(&self) -> impl Iterator<Item = &(RadioId, Packet)> {
        self.assignments
            .iter()
            .filter(|(r, _)| r.controller() == Controller::Master)
    }
}

/// Binds a batch of 1-4 packets to `l1`..`l4` in order. Batches of 4 and 3
/// put two packets on the master and the rest on the slave; batches of 2
/// and 1 stay on the master.
pub fn tx_dispatch(batch: &[Packet]) -> Result<DispatchPlan, ProtocolError> {
    dispatch_on(batch, &TX_RADIOS)
}

/// Like [`tx_dispatch`] over a subset of transmit radios, e.g. when links
/// are disabled.
pub fn dispatch_on(batch: &[Packet], radios: &[RadioId]) -> Result<DispatchPlan, ProtocolError> {
    let distinct: BTreeSet<_> = radios.iter().collect();
    if distinct.len() != radios.len() || radios.iter().any(|r| r.side() != Side::Tx) {
        return Err(ProtocolError::Radios);
    }
    if batch.is_empty() || batch.len() > radios.len() {
        return Err(ProtocolError::BatchSize {
            size: batch.len(),
            radios: radios.len(),
        });
    }
    let mut sorted = radios.to_vec();
    sorted.sort();
    Ok(DispatchPlan {
        assignments: sorted.into_iter().zip(batch.iter().cloned()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum Endpoint {
    Radio(RadioId),
    #[serde(serialize_with = "uart_label")]
    Uart,
}

fn uart_label<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str("uart")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ControlTxStart,
    ControlTxEnd,
    ControlRx,
    TxStart,
    TxEnd,
    Rx,
    /// Frame on the air could not be decoded.
    Lost,
    UartWrite,
    UartRead,
    /// Packet handed to the master's reassembly state.
    Deliver,
}

/// One line of the JSONL event log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub t_ms: f64,
    pub unit: Side,
    pub radio: Endpoint,
    pub kind: EventKind,
    pub msg_id: u16,
    pub chunk_idx: u16,
}

pub fn write_jsonl<W: std::io::Write>(events: &[Event], mut out: W) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// A frame on the air from `radio` over `[start_ms, end_ms]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub radio: RadioId,
    pub packet: Packet,
    pub start_ms: f64,
    pub end_ms: f64,
}

/// What the air interface does to frames sent together.
pub trait Medium {
    fn airtime_ms(&self, radio: RadioId, packet: &Packet) -> f64;

    /// Decoded frame at each peer receive radio, `None` when undecodable.
    fn carry(&mut self, batch: &[Transmission]) -> Vec<Option<Packet>>;
}

/// Error-free air interface with per-radio airtime.
pub struct Lossless<F> {
    pub airtime: F,
}

impl<F: Fn(RadioId, &Packet) -> f64> Medium for Lossless<F> {
    fn airtime_ms(&self, radio: RadioId, packet: &Packet) -> f64 {
        (self.airtime)(radio, packet)
    }

    fn carry(&mut self, batch: &[Transmission]) -> Vec<Option<Packet>> {
        batch.iter().map(|t| Some(t.packet.clone())).collect()
    }
}

/// Receive-side frame at radio `radio` at time `t_ms`.
#[derive(Debug, Clone, PartialEq)]
pub struct Arrival {
    pub radio: RadioId,
    pub t_ms: f64,
    pub packet: Option<Packet>,
    /// Header of the frame that was sent, for logging losses.
    pub sent: (u16, u16),
}

/// Receive unit: master radios deliver directly, slave radios wait for every
/// frame of the slot and then forward what they got over UART.
#[derive(Debug, Clone)]
pub struct ReceiverUnit {
    pub uart: UartModel,
    pub receiver: Receiver,
    pub errors: Vec<ProtocolError>,
    uart_free_ms: f64,
    pub uart_packets: usize,
}

impl ReceiverUnit {
    pub fn new(uart: UartModel, receiver: Receiver) -> Self {
        Self {
            uart,
            receiver,
            errors: Vec::new(),
            uart_free_ms: 0.0,
            uart_packets: 0,
        }
    }

    /// Handles the frames of one slot and appends their events to `log`.
    pub fn rx_collect(&mut self, arrivals: Vec<Arrival>, log: &mut Vec<Event>) {
        let mut deliveries: Vec<(f64, RadioId, Packet)> = Vec::new();
        let mut forward: Vec<(RadioId, Packet)> = Vec::new();
        let mut slave_ready = f64::NEG_INFINITY;
        for a in arrivals {
            let Some(packet) = a.packet else {
                log.push(event(
                    a.t_ms,
                    Side::Rx,
                    Endpoint::Radio(a.radio),
                    EventKind::Lost,
                    a.sent.0,
                    a.sent.1,
                ));
                if a.radio.controller() == Controller::Slave {
                    slave_ready = slave_ready.max(a.t_ms);
                }
                continue;
            };
            let kind = if packet.is_control() {
                EventKind::ControlRx
            } else {
                EventKind::Rx
            };
            let h = packet.header;
            log.push(event(
                a.t_ms,
                Side::Rx,
                Endpoint::Radio(a.radio),
                kind,
                h.msg_id,
                h.chunk_idx,
            ));
            match a.radio.controller() {
                Controller::Master => deliveries.push((a.t_ms, a.radio, packet)),
                Controller::Slave => {
                    slave_ready = slave_ready.max(a.t_ms);
                    forward.push((a.radio, packet));
                }
            }
        }
        let mut t = self.uart_free_ms.max(slave_ready);
        for (radio, packet) in forward {
            let h = packet.header;
            log.push(event(
                t,
                Side::Rx,
                Endpoint::Uart,
                EventKind::UartWrite,
                h.msg_id,
                h.chunk_idx,
            ));
            t += self.uart.transfer_ms(packet.wire_len());
            log.push(event(
                t,
                Side::Rx,
                Endpoint::Uart,
                EventKind::UartRead,
                h.msg_id,
                h.chunk_idx,
            ));
            self.uart_packets += 1;
            deliveries.push((t, radio, packet));
        }
        if t.is_finite() {
            self.uart_free_ms = t;
        }
        deliveries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (t, radio, packet) in deliveries {
            let h = packet.header;
            log.push(event(
                t,
                Side::Rx,
                Endpoint::Radio(radio),
                EventKind::Deliver,
                h.msg_id,
                h.chunk_idx,
            ));
            match self.receiver.accept(packet) {
                Ok(Accepted::Opened { .. } | Accepted::Inserted | Accepted::Duplicate | Accepted::Pending) => {}
                Err(e) => self.errors.push(e),
            }
        }
    }
}

fn event(t_ms: f64, unit: Side, radio: Endpoint, kind: EventKind, msg_id: u16, chunk_idx: u16) -> Event {
    Event {
        t_ms,
        unit,
        radio,
        kind,
        msg_id,
        chunk_idx,
    }
}

/// Outcome of sending one message end to end.
#[derive(Debug, Clone)]
pub struct Transfer {
    pub msg_id: u16,
    pub chunk_total: u16,
    /// Data frames put on the air.
    pub sent: Vec<Transmission>,
    /// Decoded data frames, parallel to `sent`.
    pub decoded: Vec<Option<Packet>>,
    pub batch_sizes: Vec<usize>,
    pub tx_uart_packets: usize,
    pub rx: ReceiverUnit,
    /// Time-ordered event log.
    pub events: Vec<Event>,
    pub finished_ms: f64,
}

impl Transfer {
    pub fn message(&self) -> Result<Vec<u8>, ProtocolError> {
        match self.rx.receiver.buffer(self.msg_id) {
            Some(buffer) => buffer.reassemble(),
            None => Err(ProtocolError::Incomplete {
                msg_id: self.msg_id,
                missing: (0..self.chunk_total).collect(),
            }),
        }
    }
}

/// Slices `message`, announces the chunk count on the first radio, then
/// dispatches batches over `radios` back to back through `medium`.
pub fn run_transfer<M: Medium>(
    message: &[u8],
    msg_id: u16,
    chunk_payload: usize,
    radios: &[RadioId],
    uart: UartModel,
    medium: &mut M,
) -> Result<Transfer, ProtocolError> {
    let packets = slice(message, msg_id, chunk_payload)?;
    let chunk_total = packets.len() as u16;
    let mut sorted = radios.to_vec();
    sorted.sort();
    let first = *sorted.first().ok_or(ProtocolError::Radios)?;

    let mut log = Vec::new();
    let mut rx = ReceiverUnit::new(uart, Receiver::default());

    let control = notify_chunk_count(msg_id, chunk_total)?;
    let airtime = medium.airtime_ms(first, &control);
    let tx = Transmission {
        radio: first,
        packet: control,
        start_ms: 0.0,
        end_ms: airtime,
    };
    log.push(event(
        0.0,
        Side::Tx,
        Endpoint::Radio(first),
        EventKind::ControlTxStart,
        msg_id,
        0,
    ));
    log.push(event(
        airtime,
        Side::Tx,
        Endpoint::Radio(first),
        EventKind::ControlTxEnd,
        msg_id,
        0,
    ));
    let decoded = medium.carry(std::slice::from_ref(&tx));
    rx.rx_collect(arrivals(&[tx], decoded), &mut log);

    let mut t = airtime;
    let mut sent = Vec::with_capacity(packets.len());
    let mut decoded_all = Vec::with_capacity(packets.len());
    let mut batch_sizes = Vec::new();
    let mut tx_uart_packets = 0;
    for batch in packets.chunks(sorted.len()) {
        let plan = dispatch_on(batch, &sorted)?;
        batch_sizes.push(batch.len());
        for (_, p) in plan.uart_share() {
            let h = p.header;
            log.push(event(
                t,
                Side::Tx,
                Endpoint::Uart,
                EventKind::UartWrite,
                h.msg_id,
                h.chunk_idx,
            ));
            t += uart.transfer_ms(p.wire_len());
            log.push(event(
                t,
                Side::Tx,
                Endpoint::Uart,
                EventKind::UartRead,
                h.msg_id,
                h.chunk_idx,
            ));
            tx_uart_packets += 1;
        }
        let txs: Vec<Transmission> = plan
            .assignments
            .into_iter()
            .map(|(radio, packet)| {
                let end_ms = t + medium.airtime_ms(radio, &packet);
                Transmission {
                    radio,
                    packet,
                    start_ms: t,
                    end_ms,
                }
            })
            .collect();
        for x in &txs {
            let h = x.packet.header;
            log.push(event(
                x.start_ms,
                Side::Tx,
                Endpoint::Radio(x.radio),
                EventKind::TxStart,
                h.msg_id,
                h.chunk_idx,
            ));
            log.push(event(
                x.end_ms,
                Side::Tx,
                Endpoint::Radio(x.radio),
                EventKind::TxEnd,
                h.msg_id,
                h.chunk_idx,
            ));
        }
        let decoded = medium.carry(&txs);
        rx.rx_collect(arrivals(&txs, decoded.clone()), &mut log);
        t = txs.iter().map(|x| x.end_ms).fold(t, f64::max);
        decoded_all.extend(decoded);
        sent.extend(txs);
    }

    log.sort_by(|a, b| a.t_ms.total_cmp(&b.t_ms));
    let finished_ms = log.last().map_or(0.0, |e| e.t_ms);
    Ok(Transfer {
        msg_id,
        chunk_total,
        sent,
        decoded: decoded_all,
        batch_sizes,
        tx_uart_packets,
        rx,
        events: log,
        finished_ms,
    })
}

fn arrivals(txs: &[Transmission], decoded: Vec<Option<Packet>>) -> Vec<Arrival> {
    txs.iter()
        .zip(decoded)
        .map(|(x, packet)| Arrival {
            radio: x.radio.peer(),
            t_ms: x.end_ms,
            packet,
            sent: (x.packet.header.msg_id, x.packet.header.chunk_idx),
        })
        .collect()
}

/// Gap between the master pair's and the slave pair's completion at the
/// receiving master for the first data batch in `events`. Zero when the
/// batch used master radios only.
pub fn rx_stagger(events: &[Event]) -> Result<f64, ProtocolError> {
    let starts: Vec<&Event> = events
        .iter()
        .filter(|e| e.unit == Side::Tx && e.kind == EventKind::TxStart)
        .collect();
    let first = starts
        .iter()
        .min_by(|a, b| a.t_ms.total_cmp(&b.t_ms))
        .ok_or(ProtocolError::IncompleteBatch { missing: Vec::new() })?;
    let batch: Vec<&&Event> = starts
        .iter()
        .filter(|e| e.msg_id == first.msg_id && e.t_ms == first.t_ms)
        .collect();

    let mut master_done = f64::NEG_INFINITY;
    let mut slave_done = f64::NEG_INFINITY;
    let mut missing = Vec::new();
    for start in &batch {
        let delivered = events.iter().find(|e| {
            e.unit == Side::Rx
                && e.kind == EventKind::Deliver
                && e.msg_id == start.msg_id
                && e.chunk_idx == start.chunk_idx
        });
        let Some(d) = delivered else {
            missing.push(start.chunk_idx);
            continue;
        };
        let Endpoint::Radio(radio) = d.radio else {
            unreachable!("deliveries name their radio")
        };
        match radio.controller() {
            Controller::Master => master_done = master_done.max(d.t_ms),
            Controller::Slave => slave_done = slave_done.max(d.t_ms),
        }
    }
    if !missing.is_empty() {
        missing.sort_unstable();
        return Err(ProtocolError::IncompleteBatch { missing });
    }
    if slave_done == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    Ok(slave_done - master_done)
}
