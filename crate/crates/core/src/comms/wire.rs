//! Byte layouts shared by every transport.
//!
//! Frame: tag (u32 LE), source rank (u32 LE), payload size (u64 LE), payload.
//! Each logical message travels as a size message on the user tag followed by
//! its payload on the same tag with [`PAYLOAD_BIT`] set.

use crate::error::CommError;

/// Marks the payload half of a two-part message.
pub const PAYLOAD_BIT: u32 = 1 << 30;
/// Marks broadcast traffic.
pub const BROADCAST_BIT: u32 = 1 << 31;
/// User tags must stay below this bound.
pub const TAG_LIMIT: u32 = 1 << 30;

pub const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub tag: u32,
    pub source: u32,
    pub payload: Vec<u8>,
}

pub fn check_tag(tag: u32) -> Result<(), CommError> {
    if tag >= TAG_LIMIT {
        Err(CommError::ReservedTag(tag))
    } else {
        Ok(())
    }
}

pub fn encode_frame(tag: u32, source: u32, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&source.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

pub fn decode_frame(bytes: &[u8]) -> Result<Envelope, CommError> {
    if bytes.len() < HEADER_LEN {
        return Err(CommError::Malformed(format!(
            "frame of {} bytes is shorter than its header",
            bytes.len()
        )));
    }
    let tag = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let source = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let size = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let actual = (bytes.len() - HEADER_LEN) as u64;
    if size != actual {
        return Err(CommError::SizeMismatch {
            announced: size,
            actual,
        });
    }
    Ok(Envelope {
        tag,
        source,
        payload: bytes[HEADER_LEN..].to_vec(),
    })
}

/// Size message body; broadcasts append their sequence number.
pub fn encode_size(size: u64, sequence: Option<u64>) -> Vec<u8> {
    let mut out = size.to_le_bytes().to_vec();
    if let Some(seq) = sequence {
        out.extend_from_slice(&seq.to_le_bytes());
    }
    out
}

pub fn decode_size(bytes: &[u8]) -> Result<(u64, Option<u64>), CommError> {
    let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    match bytes.len() {
        8 => Ok((word(0), None)),
        16 => Ok((word(0), Some(word(8)))),
        n => Err(CommError::Malformed(format!("size message of {n} bytes"))),
    }
}
