use serde::Serialize;

use super::ProtocolError;

/// Bit 15 of the on-wire `msg_id` marks a control packet.
pub const CONTROL_FLAG: u16 = 0x8000;
pub const MAX_MSG_ID: u16 = CONTROL_FLAG - 1;
pub const HEADER_LEN: usize = 7;
pub const MAX_CHUNK_PAYLOAD: usize = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketKind {
    Data,
    /// Announces `chunk_total` before any data of the message.
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct PacketHeader {
    pub kind: PacketKind,
    /// 15-bit message identifier; the control flag is kept in `kind`.
    pub msg_id: u16,
    pub chunk_idx: u16,
    pub chunk_total: u16,
    pub payload_len: u8,
}

impl PacketHeader {
    fn validate(&self) -> Result<(), ProtocolError> {
        if self.msg_id > MAX_MSG_ID {
            return Err(ProtocolError::MsgId(self.msg_id));
        }
        if self.chunk_idx >= self.chunk_total {
            return Err(ProtocolError::ChunkIndex {
                chunk_idx: self.chunk_idx,
                chunk_total: self.chunk_total,
            });
        }
        if self.payload_len == 0 {
            return Err(ProtocolError::EmptyPayload);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let id = match self.kind {
            PacketKind::Data => self.msg_id,
            PacketKind::Control => self.msg_id | CONTROL_FLAG,
        };
        let mut out = [0u8; HEADER_LEN];
        out[0..2].copy_from_slice(&id.to_le_bytes());
        out[2..4].copy_from_slice(&self.chunk_idx.to_le_bytes());
        out[4..6].copy_from_slice(&self.chunk_total.to_le_bytes());
        out[6] = self.payload_len;
        out
    }
}

/// Header plus payload; data payloads are zero-padded to the chunk size.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Packet {
    pub header: PacketHeader,
    pub payload: Vec<u8>,
}

impl Packet {
    pub fn new(header: PacketHeader, payload: Vec<u8>) -> Result<Self, ProtocolError> {
        header.validate()?;
        if payload.len() < header.payload_len as usize || payload.len() > MAX_CHUNK_PAYLOAD {
            return Err(ProtocolError::PayloadLength {
                payload_len: header.payload_len,
                buffer: payload.len(),
            });
        }
        Ok(Self { header, payload })
    }

    /// Control packet announcing `chunk_total`, which is also carried
    /// little-endian in the two payload bytes.
    pub fn control(msg_id: u16, chunk_total: u16) -> Result<Self, ProtocolError> {
        if chunk_total == 0 {
            return Err(ProtocolError::ChunkIndex {
                chunk_idx: 0,
                chunk_total,
            });
        }
        let header = PacketHeader {
            kind: PacketKind::Control,
            msg_id,
            chunk_idx: 0,
            chunk_total,
            payload_len: 2,
        };
        Self::new(header, chunk_total.to_le_bytes().to_vec())
    }

    pub fn is_control(&self) -> bool {
        self.header.kind == PacketKind::Control
    }

    /// Payload without padding.
    pub fn data(&self) -> &[u8] {
        &self.payload[..self.header.payload_len as usize]
    }

    pub fn wire_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        out.extend_from_slice(&self.header.to_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses a wire frame. Everything after the header is payload.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ProtocolError> {
        if bytes.len() < HEADER_LEN {
            return Err(ProtocolError::Truncated(bytes.len()));
        }
        let word = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
        let raw_id = word(0);
        let kind = if raw_id & CONTROL_FLAG != 0 {
            PacketKind::Control
        } else {
            PacketKind::Data
        };
        let header = PacketHeader {
            kind,
            msg_id: raw_id & MAX_MSG_ID,
            chunk_idx: word(2),
            chunk_total: word(4),
            payload_len: bytes[6],
        };
        let packet = Self::new(header, bytes[HEADER_LEN..].to_vec())?;
        if packet.is_control() {
            let announced = u16::from_le_bytes([packet.payload[0], packet.payload[1]]);
            if packet.header.payload_len != 2 || announced != packet.header.chunk_total {
                return Err(ProtocolError::MalformedControl);
            }
        }
        Ok(packet)
    }
}

/// Splits `message` into zero-padded chunks of `chunk_payload` bytes with
/// sequential indices under one `msg_id`.
pub fn slice(message: &[u8], msg_id: u16, chunk_payload: usize) -> Result<Vec<Packet>, ProtocolError> {
    if message.is_empty() {
        return Err(ProtocolError::EmptyMessage);
    }
    if !(1..=MAX_CHUNK_PAYLOAD).contains(&chunk_payload) {
        return Err(ProtocolError::ChunkPayload(chunk_payload));
    }
    if msg_id > MAX_MSG_ID {
        return Err(ProtocolError::MsgId(msg_id));
    }
    let total = message.len().div_ceil(chunk_payload);
    let chunk_total = u16::try_from(total).map_err(|_| ProtocolError::TooManyChunks(total))?;
    message
        .chunks(chunk_payload)
        .enumerate()
        .map(|(idx, chunk)| {
            let mut payload = chunk.to_vec();
            payload.resize(chunk_payload, 0);
            let header = PacketHeader {
                kind: PacketKind::Data,
                msg_id,
                chunk_idx: idx as u16,
                chunk_total,
                payload_len: chunk.len() as u8,
            };
            Packet::new(header, payload)
        })
        .collect()
}

/// Control packet for a message of `chunk_total` chunks. It is sent on the
/// first transmit radio ahead of every data batch.
pub fn notify_chunk_count(msg_id: u16, chunk_total: u16) -> Result<Packet, ProtocolError> {
    Packet::control(msg_id, chunk_total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_four_way_split() {
        let packets = slice(b"ABCDEFGHIJKL", 1, 3).unwrap();
        assert_eq!(packets.len(), 4);
        let data: Vec<&[u8]> = packets.iter().map(|p| p.data()).collect();
        assert_eq!(data, [b"ABC", b"DEF", b"GHI", b"JKL"]);
        assert!(packets
            .iter()
            .all(|p| p.header.chunk_total == 4 && p.header.msg_id == 1));
    }

    #[test]
    fn last_chunk_padded() {
        let message: Vec<u8> = (1..=13).collect();
        let packets = slice(&message, 9, 4).unwrap();
        assert_eq!(packets.len(), 4);
        let last = &packets[3];
        assert_eq!(last.header.payload_len, 1);
        assert_eq!(last.payload, vec![13, 0, 0, 0]);
    }

    #[test]
    fn full_batch_message() {
        let packets = slice(&[0xAA; 240], 0, 60).unwrap();
        assert_eq!(packets.len(), 4);
        assert!(packets.iter().all(|p| p.wire_len() == 67));
    }

    #[test]
    fn slice_errors() {
        assert_eq!(slice(&[], 0, 4), Err(ProtocolError::EmptyMessage));
        assert_eq!(slice(b"x", 0, 0), Err(ProtocolError::ChunkPayload(0)));
        assert_eq!(slice(b"x", 0, 256), Err(ProtocolError::ChunkPayload(256)));
        assert_eq!(slice(b"x", 0x8000, 4), Err(ProtocolError::MsgId(0x8000)));
        assert_eq!(slice(&vec![0; 65_536], 0, 1), Err(ProtocolError::TooManyChunks(65_536)));
    }

    #[test]
    fn wire_layout_is_little_endian() {
        let header = PacketHeader {
            kind: PacketKind::Data,
            msg_id: 0x0102,
            chunk_idx: 0x0304,
            chunk_total: 0x0506,
            payload_len: 2,
        };
        let p = Packet::new(header, vec![0xEE, 0xFF]).unwrap();
        assert_eq!(p.to_bytes(), [0x02, 0x01, 0x04, 0x03, 0x06, 0x05, 2, 0xEE, 0xFF]);
        assert_eq!(Packet::from_bytes(&p.to_bytes()).unwrap(), p);
    }

    #[test]
    fn control_packet_layout() {
        let c = notify_chunk_count(5, 8).unwrap();
        assert_eq!(c.to_bytes(), [0x05, 0x80, 0, 0, 8, 0, 2, 8, 0]);
        let back = Packet::from_bytes(&c.to_bytes()).unwrap();
        assert!(back.is_control());
        assert_eq!(back.header.chunk_total, 8);
        assert!(notify_chunk_count(5, 1).is_ok());
        assert!(notify_chunk_count(5, 0).is_err());
    }

    #[test]
    fn parse_rejects_bad_frames() {
        assert_eq!(Packet::from_bytes(&[0; 6]), Err(ProtocolError::Truncated(6)));
        // chunk_idx == chunk_total
        assert!(Packet::from_bytes(&[0, 0, 1, 0, 1, 0, 1, 0]).is_err());
        // payload_len larger than buffer
        assert!(Packet::from_bytes(&[0, 0, 0, 0, 1, 0, 3, 0]).is_err());
        // control frame whose payload disagrees with the header
        assert_eq!(
            Packet::from_bytes(&[0, 0x80, 0, 0, 4, 0, 2, 5, 0]),
            Err(ProtocolError::MalformedControl)
        );
    }
}
