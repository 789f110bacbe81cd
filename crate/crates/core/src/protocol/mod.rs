//! Slice-and-reassemble transfer over four radios driven by a master and a
//! slave controller on each end.

mod packet;
mod reassembly;
mod unit;

use thiserror::Error;

pub use packet::{
    notify_chunk_count, slice, Packet, PacketHeader, PacketKind, CONTROL_FLAG, HEADER_LEN, MAX_CHUNK_PAYLOAD,
    MAX_MSG_ID,
};
pub use reassembly::{Accepted, InsertOutcome, ReassemblyBuffer, Receiver, DEFAULT_PENDING_CAPACITY};
pub use unit::{
    dispatch_on, run_transfer, rx_stagger, tx_dispatch, write_jsonl, Arrival, Controller, DispatchPlan, Endpoint,
    Event, EventKind, Lossless, Medium, RadioId, ReceiverUnit, Side, Transfer, Transmission, UartModel, RX_RADIOS,
    STREAMS, TX_RADIOS,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("message is empty")]
    EmptyMessage,
    #[error("chunk payload {0} outside 1..=255")]
    ChunkPayload(usize),
    #[error("msg_id {0:#06x} uses the control bit")]
    MsgId(u16),
    #[error("{0} chunks exceed the 16-bit chunk counter")]
    TooManyChunks(usize),
    #[error("chunk index {chunk_idx} not below chunk total {chunk_total}")]
    ChunkIndex { chunk_idx: u16, chunk_total: u16 },
    #[error("payload_len is zero")]
    EmptyPayload,
    #[error("payload_len {payload_len} does not fit a {buffer}-byte payload")]
    PayloadLength { payload_len: u8, buffer: usize },
    #[error("frame of {0} bytes is shorter than the header")]
    Truncated(usize),
    #[error("control frame payload does not match its header")]
    MalformedControl,
    #[error("packet for message {msg_id} offered to buffer {buffer}")]
    WrongBuffer { msg_id: u16, buffer: u16 },
    #[error("conflicting payload for message {msg_id} chunk {chunk_idx}")]
    Conflict { msg_id: u16, chunk_idx: u16 },
    #[error("message {msg_id} incomplete, missing chunks {missing:?}")]
    Incomplete { msg_id: u16, missing: Vec<u16> },
    #[error("pending pool full ({0} packets)")]
    PendingFull(usize),
    #[error("message {msg_id} announced {announced} chunks, previously {known}")]
    ControlMismatch { msg_id: u16, announced: u16, known: u16 },
    #[error("batch of {size} packets cannot be dispatched on {radios} radios")]
    BatchSize { size: usize, radios: usize },
    #[error("radio set must be distinct transmit radios")]
    Radios,
    #[error("first batch incomplete, missing chunks {missing:?}")]
    IncompleteBatch { missing: Vec<u16> },
}
