//! Round message framing.
//!
//! ```text
//! +--------+---------+------+----------------+-----------+
//! | "DPHY" | version | type | payload length |  payload  |
//! | 4 B    | 1 B     | 1 B  | u32 LE         |  n bytes  |
//! +--------+---------+------+----------------+-----------+
//! ```
//!
//! All integers are little-endian. Payloads:
//!
//! | type | name          | payload                                                                  |
//! |------|---------------|--------------------------------------------------------------------------|
//! | 1    | GRID_ANNOUNCE | round u64, p u32, k u32, n u32, n_effective u32, frac_bits u8, ring_bits u8 |
//! | 2    | SEED_EXCHANGE | round u64, participant u32, count u32, count x (peer u32, seed u64)      |
//! | 3    | CONTRIBUTION  | round u64, participant u32, count u32, count x ring element u64          |
//! | 4    | AGGREGATE     | round u64, contributors u32, count u32, count x ring element u64         |
//! | 5    | ABORT         | round u64, count u32, count x dropped participant u32                    |

use std::io::{self, Read, Write};

use crate::error::{Error, Result};
use crate::securesum::{ParticipantId, RingElement};

pub const MAGIC: [u8; 4] = *b"DPHY";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;
/// Fixed part of a CONTRIBUTION payload ahead of the ring elements.
pub const CONTRIBUTION_HEADER_LEN: usize = 16;
/// Frames above this size are rejected before allocation.
pub const MAX_PAYLOAD_LEN: u32 = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageType {
    GridAnnounce = 1,
    SeedExchange = 2,
    Contribution = 3,
    Aggregate = 4,
    Abort = 5,
}

impl TryFrom<u8> for MessageType {
    type Error = Error;

    fn try_from(b: u8) -> Result<Self> {
        Ok(match b {
            1 => MessageType::GridAnnounce,
            2 => MessageType::SeedExchange,
            3 => MessageType::Contribution,
            4 => MessageType::Aggregate,
            5 => MessageType::Abort,
            other => return Err(Error::Wire(format!("unknown message type {other}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RoundMessage {
    GridAnnounce {
        round_id: u64,
        p: u32,
        k: u32,
        n: u32,
        n_effective: u32,
        fractional_bits: u8,
        ring_bits: u8,
    },
    SeedExchange {
        round_id: u64,
        participant: ParticipantId,
        seeds: Vec<(ParticipantId, u64)>,
    },
    Contribution {
        round_id: u64,
        participant: ParticipantId,
        elements: Vec<RingElement>,
    },
    Aggregate {
        round_id: u64,
        contributors: u32,
        elements: Vec<RingElement>,
    },
    Abort {
        round_id: u64,
        dropouts: Vec<ParticipantId>,
    },
}

impl RoundMessage {
    pub fn kind(&self) -> MessageType {
        match self {
            RoundMessage::GridAnnounce { .. } => MessageType::GridAnnounce,
            RoundMessage::SeedExchange { .. } => MessageType::SeedExchange,
            RoundMessage::Contribution { .. } => MessageType::Contribution,
            RoundMessage::Aggregate { .. } => MessageType::Aggregate,
            RoundMessage::Abort { .. } => MessageType::Abort,
        }
    }

    pub fn round_id(&self) -> u64 {
        match self {
            RoundMessage::GridAnnounce { round_id, .. }
            | RoundMessage::SeedExchange { round_id, .. }
            | RoundMessage::Contribution { round_id, .. }
            | RoundMessage::Aggregate { round_id, .. }
            | RoundMessage::Abort { round_id, .. } => *round_id,
        }
    }

    fn payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.round_id().to_le_bytes());
        match self {
            RoundMessage::GridAnnounce {
                p,
                k,
                n,
                n_effective,
                fractional_bits,
                ring_bits,
                ..
            } => {
                for v in [p, k, n, n_effective] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out.push(*fractional_bits);
                out.push(*ring_bits);
            }
            RoundMessage::SeedExchange {
                participant, seeds, ..
            } => {
                out.extend_from_slice(&participant.0.to_le_bytes());
                out.extend_from_slice(&(seeds.len() as u32).to_le_bytes());
                for (peer, seed) in seeds {
                    out.extend_from_slice(&peer.0.to_le_bytes());
                    out.extend_from_slice(&seed.to_le_bytes());
                }
            }
            RoundMessage::Contribution {
                participant,
                elements,
                ..
            } => {
                out.extend_from_slice(&participant.0.to_le_bytes());
                put_elements(&mut out, elements);
            }
            RoundMessage::Aggregate {
                contributors,
                elements,
                ..
            } => {
                out.extend_from_slice(&contributors.to_le_bytes());
                put_elements(&mut out, elements);
            }
            RoundMessage::Abort { dropouts, .. } => {
                out.extend_from_slice(&(dropouts.len() as u32).to_le_bytes());
                for d in dropouts {
                    out.extend_from_slice(&d.0.to_le_bytes());
                }
            }
        }
        out
    }

    /// Full frame: header plus payload.
    pub fn encode(&self) -> Vec<u8> {
        let payload = self.payload();
        let mut frame = Vec::with_capacity(HEADER_LEN + payload.len());
        frame.extend_from_slice(&MAGIC);
        frame.push(VERSION);
        frame.push(self.kind() as u8);
        frame.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        frame.extend_from_slice(&payload);
        frame
    }

    pub fn decode(frame: &[u8]) -> Result<Self> {
        let (kind, payload) = split_frame(frame)?;
        let mut r = Cursor::new(payload);
        let round_id = r.u64()?;
        let msg = match kind {
            MessageType::GridAnnounce => RoundMessage::GridAnnounce {
                round_id,
                p: r.u32()?,
                k: r.u32()?,
                n: r.u32()?,
                n_effective: r.u32()?,
                fractional_bits: r.u8()?,
                ring_bits: r.u8()?,
            },
            MessageType::SeedExchange => {
                let participant = ParticipantId(r.u32()?);
                let count = r.count(12)?;
                let seeds = (0..count)
                    .map(|_| Ok((ParticipantId(r.u32()?), r.u64()?)))
                    .collect::<Result<_>>()?;
                RoundMessage::SeedExchange {
                    round_id,
                    participant,
                    seeds,
                }
            }
            MessageType::Contribution => {
                let participant = ParticipantId(r.u32()?);
                RoundMessage::Contribution {
                    round_id,
                    participant,
                    elements: r.elements()?,
                }
            }
            MessageType::Aggregate => {
                let contributors = r.u32()?;
                RoundMessage::Aggregate {
                    round_id,
                    contributors,
                    elements: r.elements()?,
                }
            }
            MessageType::Abort => {
                let count = r.count(4)?;
                let dropouts = (0..count)
                    .map(|_| r.u32().map(ParticipantId))
                    .collect::<Result<_>>()?;
                RoundMessage::Abort { round_id, dropouts }
            }
        };
        if !r.is_empty() {
            return Err(Error::Wire(format!(
                "{} trailing payload bytes in {kind:?}",
                r.remaining()
            )));
        }
        Ok(msg)
    }
}

fn put_elements(out: &mut Vec<u8>, elements: &[RingElement]) {
    out.extend_from_slice(&(elements.len() as u32).to_le_bytes());
    for e in elements {
        out.extend_from_slice(&e.to_le_bytes());
    }
}

/// Validates the header and returns the message type and payload slice.
pub fn split_frame(frame: &[u8]) -> Result<(MessageType, &[u8])> {
    if frame.len() < HEADER_LEN {
        return Err(Error::Wire(format!("frame of {} bytes is shorter than the header", frame.len())));
    }
    if frame[..4] != MAGIC {
        return Err(Error::Wire("bad magic".into()));
    }
    if frame[4] != VERSION {
        return Err(Error::Wire(format!("unsupported version {}", frame[4])));
    }
    let kind = MessageType::try_from(frame[5])?;
    let len = u32::from_le_bytes(frame[6..10].try_into().expect("4 bytes")) as usize;
    if frame.len() - HEADER_LEN != len {
        return Err(Error::Wire(format!(
            "payload length {len} does not match {} bytes received",
            frame.len() - HEADER_LEN
        )));
    }
    Ok((kind, &frame[HEADER_LEN..]))
}

/// Reads one frame. `Ok(None)` on a clean end of stream before any header
/// byte.
pub fn read_frame<R: Read>(reader: &mut R) -> Result<Option<Vec<u8>>> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match reader.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(Error::Wire("stream closed inside a frame header".into())),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::Transport(e.to_string())),
        }
    }
    if header[..4] != MAGIC {
        return Err(Error::Wire("bad magic".into()));
    }
    if header[4] != VERSION {
        return Err(Error::Wire(format!("unsupported version {}", header[4])));
    }
    let len = u32::from_le_bytes(header[6..10].try_into().expect("4 bytes"));
    if len > MAX_PAYLOAD_LEN {
        return Err(Error::Wire(format!("payload length {len} exceeds limit")));
    }
    let mut frame = header.to_vec();
    frame.resize(HEADER_LEN + len as usize, 0);
    reader
        .read_exact(&mut frame[HEADER_LEN..])
        .map_err(|e| Error::Wire(format!("truncated payload: {e}")))?;
    Ok(Some(frame))
}

pub fn write_frame<W: Write>(writer: &mut W, frame: &[u8]) -> Result<()> {
    writer
        .write_all(frame)
        .and_then(|_| writer.flush())
        .map_err(|e| Error::Transport(e.to_string()))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Wire("payload truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    /// Reads a length prefix and checks the remaining bytes can hold it.
    fn count(&mut self, item_len: usize) -> Result<usize> {
        let count = self.u32()? as usize;
        if count.checked_mul(item_len).is_none_or(|b| b > self.remaining()) {
            return Err(Error::Wire(format!("length prefix {count} overruns payload")));
        }
        Ok(count)
    }

    fn elements(&mut self) -> Result<Vec<RingElement>> {
        let count = self.count(8)?;
        (0..count).map(|_| self.u64()).collect()
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn is_empty(&self) -> bool {
        self.remaining() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn contribution_frame_layout() {
        let msg = RoundMessage::Contribution {
            round_id: 7,
            participant: ParticipantId(2),
            elements: vec![1, u64::MAX],
        };
        let frame = msg.encode();
        let mut expected = b"DPHY".to_vec();
        expected.extend_from_slice(&[1, 3]);
        expected.extend_from_slice(&32u32.to_le_bytes());
        expected.extend_from_slice(&7u64.to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1u64.to_le_bytes());
        expected.extend_from_slice(&u64::MAX.to_le_bytes());
        assert_eq!(frame, expected);
        assert_eq!(RoundMessage::decode(&frame).unwrap(), msg);
    }

    #[test]
    fn rejects_malformed_frames() {
        let frame = RoundMessage::Abort {
            round_id: 1,
            dropouts: vec![ParticipantId(4)],
        }
        .encode();
        let mut bad = frame.clone();
        bad[0] = b'X';
        assert!(RoundMessage::decode(&bad).is_err());
        let mut bad = frame.clone();
        bad[4] = 2;
        assert!(matches!(RoundMessage::decode(&bad), Err(Error::Wire(m)) if m.contains("version")));
        let mut bad = frame.clone();
        bad[5] = 9;
        assert!(RoundMessage::decode(&bad).is_err());
        assert!(RoundMessage::decode(&frame[..frame.len() - 1]).is_err());
        let mut bad = frame.clone();
        bad.push(0);
        assert!(RoundMessage::decode(&bad).is_err());
        // Length prefix claiming more dropouts than bytes available.
        let mut bad = frame.clone();
        bad[HEADER_LEN + 8] = 200;
        assert!(RoundMessage::decode(&bad).is_err());
    }

    #[test]
    fn stream_reader_handles_eof() {
        let a = RoundMessage::Aggregate {
            round_id: 3,
            contributors: 2,
            elements: vec![5, 6, 7],
        }
        .encode();
        let mut stream: Vec<u8> = a.clone();
        stream.extend_from_slice(&a);
        let mut r = stream.as_slice();
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), a);
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), a);
        assert!(read_frame(&mut r).unwrap().is_none());
        let mut truncated = &a[..12];
        assert!(read_frame(&mut truncated).is_err());
    }

    fn any_message() -> impl Strategy<Value = RoundMessage> {
        let id = any::<u32>().prop_map(ParticipantId);
        prop_oneof![
            (any::<u64>(), any::<u32>(), any::<u32>(), any::<u32>(), any::<u32>(), any::<u8>(), any::<u8>()).prop_map(
                |(round_id, p, k, n, n_effective, fractional_bits, ring_bits)| RoundMessage::GridAnnounce {
                    round_id, p, k, n, n_effective, fractional_bits, ring_bits
                }
            ),
            (any::<u64>(), id.clone(), prop::collection::vec((id.clone(), any::<u64>()), 0..8))
                .prop_map(|(round_id, participant, seeds)| RoundMessage::SeedExchange { round_id, participant, seeds }),
            (any::<u64>(), id.clone(), prop::collection::vec(any::<u64>(), 0..32))
                .prop_map(|(round_id, participant, elements)| RoundMessage::Contribution { round_id, participant, elements }),
            (any::<u64>(), any::<u32>(), prop::collection::vec(any::<u64>(), 0..32))
                .prop_map(|(round_id, contributors, elements)| RoundMessage::Aggregate { round_id, contributors, elements }),
            (any::<u64>(), prop::collection::vec(id, 0..8))
                .prop_map(|(round_id, dropouts)| RoundMessage::Abort { round_id, dropouts }),
        ]
    }

    proptest! {
        #[test]
        fn frames_round_trip(msg in any_message()) {
            let frame = msg.encode();
            prop_assert_eq!(frame.len(), HEADER_LEN + u32::from_le_bytes(frame[6..10].try_into().unwrap()) as usize);
            prop_assert_eq!(RoundMessage::decode(&frame).unwrap(), msg);
        }
    }
}
