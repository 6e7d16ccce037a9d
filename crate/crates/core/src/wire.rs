//! Classical-channel message framing.
//!
//! ```text
//! +--------+---------+------+----------------+---------+
//! | "CVQK" | version | type | length (u32 BE) | payload |
//! +--------+---------+------+----------------+---------+
//! ```
//!
//! Integers are big-endian. Bit strings are packed eight to a byte, most
//! significant bit first, zero-padded at the end. Payload layouts are listed
//! in `protocol.md` at the repository root.

use crate::channel::Basis;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"CVQK";
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0:#04x}")]
    BadVersion(u8),
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("frame truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("malformed {kind:?} payload: {reason}")]
    Malformed { kind: MessageType, reason: String },
    #[error("payload of {0} bytes exceeds the 32-bit length field")]
    TooLarge(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageType {
    BasisAnnouncement = 0x01,
    SiftResponse = 0x02,
    CascadeParityRequest = 0x10,
    CascadeParityResponse = 0x11,
    HashCheck = 0x20,
    HashVerdict = 0x21,
}

impl MessageType {
    pub fn from_tag(tag: u8) -> Result<Self, WireError> {
        Ok(match tag {
            0x01 => MessageType::BasisAnnouncement,
            0x02 => MessageType::SiftResponse,
            0x10 => MessageType::CascadeParityRequest,
            0x11 => MessageType::CascadeParityResponse,
            0x20 => MessageType::HashCheck,
            0x21 => MessageType::HashVerdict,
            other => return Err(WireError::UnknownType(other)),
        })
    }

    pub fn tag(self) -> u8 {
        self as u8
    }

    /// Whether Bob (the driving peer) originates this message.
    pub fn sent_by_bob(self) -> bool {
        matches!(
            self,
            MessageType::BasisAnnouncement
                | MessageType::CascadeParityRequest
                | MessageType::HashCheck
        )
    }
}

/// One raw frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub kind: MessageType,
    pub payload: Vec<u8>,
}

impl WireMessage {
    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        let len = u32::try_from(self.payload.len())
            .map_err(|_| WireError::TooLarge(self.payload.len()))?;
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.kind.tag());
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    /// Parses a header, returning the message type and payload length.
    pub fn parse_header(header: &[u8]) -> Result<(MessageType, usize), WireError> {
        if header.len() < HEADER_LEN {
            return Err(WireError::Truncated {
                needed: HEADER_LEN,
                have: header.len(),
            });
        }
        let magic: [u8; 4] = header[0..4].try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(WireError::BadMagic(magic));
        }
        if header[4] != VERSION {
            return Err(WireError::BadVersion(header[4]));
        }
        let kind = MessageType::from_tag(header[5])?;
        let len = u32::from_be_bytes(header[6..10].try_into().expect("4 bytes")) as usize;
        Ok((kind, len))
    }

    /// Decodes one frame from the front of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(WireMessage, usize), WireError> {
        let (kind, len) = Self::parse_header(bytes)?;
        let total = HEADER_LEN + len;
        if bytes.len() < total {
            return Err(WireError::Truncated {
                needed: total,
                have: bytes.len(),
            });
        }
        Ok((
            WireMessage {
                kind,
                payload: bytes[HEADER_LEN..total].to_vec(),
            },
            total,
        ))
    }

    /// Splits a concatenation of frames.
    pub fn decode_all(mut bytes: &[u8]) -> Result<Vec<WireMessage>, WireError> {
        let mut out = Vec::new();
        while !bytes.is_empty() {
            let (msg, used) = Self::decode(bytes)?;
            out.push(msg);
            bytes = &bytes[used..];
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum HashPurpose {
    /// Whole-key comparison after error correction.
    Verify = 0x01,
    /// Announces the Toeplitz seed and output length for privacy amplification.
    PrivacyAmplification = 0x02,
}

impl HashPurpose {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0x01 => Some(HashPurpose::Verify),
            0x02 => Some(HashPurpose::PrivacyAmplification),
            _ => None,
        }
    }
}

/// Typed view of the protocol messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    BasisAnnouncement {
        event_ids: Vec<u32>,
        bases: Vec<Basis>,
    },
    SiftResponse {
        accepted: u32,
    },
    CascadeParityRequest {
        pass: u32,
        shuffle_seed: u64,
        key_length: u32,
        /// Half-open `[start, end)` ranges in the pass's shuffled order.
        ranges: Vec<(u32, u32)>,
    },
    CascadeParityResponse {
        parities: Vec<bool>,
    },
    HashCheck {
        purpose: HashPurpose,
        seed: u64,
        output_bits: u32,
        tag: Vec<bool>,
    },
    HashVerdict {
        purpose: HashPurpose,
        accepted: bool,
    },
}

pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    bits.chunks(8)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | ((b as u8) << (7 - i)))
        })
        .collect()
}

pub fn unpack_bits(bytes: &[u8], count: usize) -> Vec<bool> {
    (0..count)
        .map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0)
        .collect()
}

struct Reader<'a> {
    kind: MessageType,
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn malformed(&self, reason: impl Into<String>) -> WireError {
        WireError::Malformed {
            kind: self.kind,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.bytes.len() < n {
            return Err(self.malformed(format!("needs {n} more bytes, {} left", self.bytes.len())));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn bits(&mut self, count: usize) -> Result<Vec<bool>, WireError> {
        let bytes = self.take(count.div_ceil(8))?;
        Ok(unpack_bits(bytes, count))
    }

    fn finish(self) -> Result<(), WireError> {
        if self.bytes.is_empty() {
            Ok(())
        } else {
            Err(self.malformed(format!("{} trailing bytes", self.bytes.len())))
        }
    }
}

impl Message {
    pub fn kind(&self) -> MessageType {
        match self {
            Message::BasisAnnouncement { .. } => MessageType::BasisAnnouncement,
            Message::SiftResponse { .. } => MessageType::SiftResponse,
            Message::CascadeParityRequest { .. } => MessageType::CascadeParityRequest,
            Message::CascadeParityResponse { .. } => MessageType::CascadeParityResponse,
            Message::HashCheck { .. } => MessageType::HashCheck,
            Message::HashVerdict { .. } => MessageType::HashVerdict,
        }
    }

    pub fn to_wire(&self) -> WireMessage {
        let mut p = Vec::new();
        match self {
            Message::BasisAnnouncement { event_ids, bases } => {
                assert_eq!(event_ids.len(), bases.len());
                p.extend_from_slice(&(event_ids.len() as u32).to_be_bytes());
                for id in event_ids {
                    p.extend_from_slice(&id.to_be_bytes());
                }
                let bits: Vec<bool> = bases.iter().map(|b| b.as_bit()).collect();
                p.extend_from_slice(&pack_bits(&bits));
            }
            Message::SiftResponse { accepted } => {
                p.extend_from_slice(&accepted.to_be_bytes());
            }
            Message::CascadeParityRequest {
                pass,
                shuffle_seed,
                key_length,
                ranges,
            } => {
                p.extend_from_slice(&pass.to_be_bytes());
                p.extend_from_slice(&shuffle_seed.to_be_bytes());
                p.extend_from_slice(&key_length.to_be_bytes());
                p.extend_from_slice(&(ranges.len() as u32).to_be_bytes());
                for (start, end) in ranges {
                    p.extend_from_slice(&start.to_be_bytes());
                    p.extend_from_slice(&end.to_be_bytes());
                }
            }
            Message::CascadeParityResponse { parities } => {
                p.extend_from_slice(&(parities.len() as u32).to_be_bytes());
                p.extend_from_slice(&pack_bits(parities));
            }
            Message::HashCheck {
                purpose,
                seed,
                output_bits,
                tag,
            } => {
                p.push(*purpose as u8);
                p.extend_from_slice(&seed.to_be_bytes());
                p.extend_from_slice(&output_bits.to_be_bytes());
                p.extend_from_slice(&(tag.len() as u32).to_be_bytes());
                p.extend_from_slice(&pack_bits(tag));
            }
            Message::HashVerdict { purpose, accepted } => {
                p.push(*purpose as u8);
                p.push(*accepted as u8);
            }
        }
        WireMessage {
            kind: self.kind(),
            payload: p,
        }
    }

    pub fn from_wire(msg: &WireMessage) -> Result<Message, WireError> {
        let mut r = Reader {
            kind: msg.kind,
            bytes: &msg.payload,
        };
        let out = match msg.kind {
            MessageType::BasisAnnouncement => {
                let n = r.u32()? as usize;
                let event_ids = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
                let bases = r.bits(n)?.into_iter().map(Basis::from_bit).collect();
                Message::BasisAnnouncement { event_ids, bases }
            }
            MessageType::SiftResponse => Message::SiftResponse { accepted: r.u32()? },
            MessageType::CascadeParityRequest => {
                let pass = r.u32()?;
                let shuffle_seed = r.u64()?;
                let key_length = r.u32()?;
                let n = r.u32()? as usize;
                let mut ranges = Vec::with_capacity(n.min(1 << 20));
                for _ in 0..n {
                    let start = r.u32()?;
                    let end = r.u32()?;
                    if start >= end {
                        return Err(r.malformed(format!("empty range [{start}, {end})")));
                    }
                    ranges.push((start, end));
                }
                Message::CascadeParityRequest {
                    pass,
                    shuffle_seed,
                    key_length,
                    ranges,
                }
            }
            MessageType::CascadeParityResponse => {
                let n = r.u32()? as usize;
                Message::CascadeParityResponse {
                    parities: r.bits(n)?,
                }
            }
            MessageType::HashCheck => {
                let purpose_byte = r.u8()?;
                let purpose = HashPurpose::from_byte(purpose_byte)
                    .ok_or_else(|| r.malformed(format!("hash purpose {purpose_byte:#04x}")))?;
                let seed = r.u64()?;
                let output_bits = r.u32()?;
                let tag_len = r.u32()? as usize;
                Message::HashCheck {
                    purpose,
                    seed,
                    output_bits,
                    tag: r.bits(tag_len)?,
                }
            }
            MessageType::HashVerdict => {
                let purpose_byte = r.u8()?;
                let purpose = HashPurpose::from_byte(purpose_byte)
                    .ok_or_else(|| r.malformed(format!("hash purpose {purpose_byte:#04x}")))?;
                let accepted = match r.u8()? {
                    0 => false,
                    1 => true,
                    v => return Err(r.malformed(format!("verdict byte {v}"))),
                };
                Message::HashVerdict { purpose, accepted }
            }
        };
        r.finish()?;
        Ok(out)
    }

    pub fn encode(&self) -> Vec<u8> {
        self.to_wire()
            .encode()
            .expect("protocol messages fit the 32-bit length field")
    }
}
