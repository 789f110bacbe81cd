use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

use super::packet::Packet;
use super::ProtocolError;

pub const DEFAULT_PENDING_CAPACITY: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    Duplicate,
}

/// Chunks of one message keyed by index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReassemblyBuffer {
    msg_id: u16,
    expected_total: u16,
    received: BTreeMap<u16, Packet>,
}

impl ReassemblyBuffer {
    pub fn new(msg_id: u16, expected_total: u16) -> Self {
        Self {
            msg_id,
            expected_total,
            received: BTreeMap::new(),
        }
    }

    pub fn msg_id(&self) -> u16 {
        self.msg_id
    }

    pub fn expected_total(&self) -> u16 {
        self.expected_total
    }

    pub fn received_count(&self) -> usize {
        self.received.len()
    }

    pub fn is_complete(&self) -> bool {
        self.received.len() == self.expected_total as usize
    }

    pub fn missing(&self) -> Vec<u16> {
        (0..self.expected_total)
            .filter(|i| !self.received.contains_key(i))
            .collect()
    }

    /// Adds a data chunk. Re-inserting an identical chunk is a no-op; a
    /// different chunk under the same index is an integrity error.
    pub fn insert(&mut self, packet: Packet) -> Result<InsertOutcome, ProtocolError> {
        let h = packet.header;
        if packet.is_control() || h.msg_id != self.msg_id {
            return Err(ProtocolError::WrongBuffer {
                msg_id: h.msg_id,
                buffer: self.msg_id,
            });
        }
        if h.chunk_total != self.expected_total || h.chunk_idx >= self.expected_total {
            return Err(ProtocolError::ChunkIndex {
                chunk_idx: h.chunk_idx,
                chunk_total: self.expected_total,
            });
        }
        match self.received.get(&h.chunk_idx) {
            Some(existing) if *existing == packet => Ok(InsertOutcome::Duplicate),
            Some(_) => Err(ProtocolError::Conflict {
                msg_id: h.msg_id,
                chunk_idx: h.chunk_idx,
            }),
            None => {
                self.received.insert(h.chunk_idx, packet);
                Ok(InsertOutcome::Inserted)
            }
        }
    }

    /// Concatenates chunk data in index order, dropping padding.
    pub fn reassemble(&self) -> Result<Vec<u8>, ProtocolError> {
        if !self.is_complete() {
            return Err(ProtocolError::Incomplete {
                msg_id: self.msg_id,
                missing: self.missing(),
            });
        }
        Ok(self.received.values().flat_map(|p| p.data().iter().copied()).collect())
    }
}

/// Result of handing one packet to [`Receiver::accept`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Accepted {
    /// Control packet opened a buffer; `drained` pending chunks were merged.
    Opened {
        msg_id: u16,
        drained: usize,
    },
    Inserted,
    Duplicate,
    /// Held until the control packet for `msg_id` arrives.
    Pending,
}

/// Master-side merge point: per-message buffers plus a bounded pool for
/// chunks that arrive before their control packet.
#[derive(Debug, Clone)]
pub struct Receiver {
    buffers: BTreeMap<u16, ReassemblyBuffer>,
    pending: VecDeque<Packet>,
    pending_capacity: usize,
}

impl Default for Receiver {
    fn default() -> Self {
        Self::new(DEFAULT_PENDING_CAPACITY)
    }
}

impl Receiver {
    pub fn new(pending_capacity: usize) -> Self {
        Self {
            buffers: BTreeMap::new(),
            pending: VecDeque::new(),
            pending_capacity,
        }
    }

    pub fn buffer(&self, msg_id: u16) -> Option<&ReassemblyBuffer> {
        self.buffers.get(&msg_id)
    }

    pub fn buffers(&self) -> impl Iterator<Item = &ReassemblyBuffer> {
        self.buffers.values()
    }

    pub fn pending(&self) -> &VecDeque<Packet> {
        &self.pending
    }

    pub fn accept(&mut self, packet: Packet) -> Result<Accepted, ProtocolError> {
        let h = packet.header;
        if packet.is_control() {
            if let Some(existing) = self.buffers.get(&h.msg_id) {
                if existing.expected_total() != h.chunk_total {
                    return Err(ProtocolError::ControlMismatch {
                        msg_id: h.msg_id,
                        announced: h.chunk_total,
                        known: existing.expected_total(),
                    });
                }
                return Ok(Accepted::Duplicate);
            }
            let mut buffer = ReassemblyBuffer::new(h.msg_id, h.chunk_total);
            let (mine, rest): (VecDeque<_>, VecDeque<_>) = std::mem::take(&mut self.pending)
                .into_iter()
                .partition(|p| p.header.msg_id == h.msg_id);
            self.pending = rest;
            let drained = mine.len();
            let mut first_err = None;
            for p in mine {
                if let Err(e) = buffer.insert(p) {
                    first_err.get_or_insert(e);
                }
            }
            self.buffers.insert(h.msg_id, buffer);
            return match first_err {
                Some(e) => Err(e),
                None => Ok(Accepted::Opened {
                    msg_id: h.msg_id,
                    drained,
                }),
            };
        }
        match self.buffers.get_mut(&h.msg_id) {
            Some(buffer) => buffer.insert(packet).map(|o| match o {
                InsertOutcome::Inserted => Accepted::Inserted,
                InsertOutcome::Duplicate => Accepted::Duplicate,
            }),
            None => {
                if self.pending.contains(&packet) {
                    return Ok(Accepted::Pending);
                }
                if self.pending.len() >= self.pending_capacity {
                    return Err(ProtocolError::PendingFull(self.pending_capacity));
                }
                self.pending.push_back(packet);
                Ok(Accepted::Pending)
            }
        }
    }
}
