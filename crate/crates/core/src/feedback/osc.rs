//! OSC 1.0 message carrying the metric and its level.
//!
//! Layout: null-terminated address padded to a 4-byte boundary, the type-tag
//! string `",fi"` (padded likewise), then a big-endian `f32` and `i32`.

use alloc::vec::Vec;

pub const OSC_ADDRESS: &str = "/neuresonance/ibs";
const TYPE_TAGS: &str = ",fi";

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum OscDecodeError {
    #[error("packet truncated at byte {0}")]
    Truncated(usize),
    #[error("string at byte {0} is not null-terminated or padded")]
    BadString(usize),
    #[error("unexpected address")]
    Address,
    #[error("unexpected type tags")]
    TypeTags,
}

fn push_padded_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(s.as_bytes());
    buf.push(0);
    while !buf.len().is_multiple_of(4) {
        buf.push(0);
    }
}

/// Encodes `(metric, level)` as an OSC message to [`OSC_ADDRESS`].
pub fn encode_osc(metric_value: f32, level: i32) -> Vec<u8> {
    let mut buf = Vec::with_capacity(32);
    push_padded_str(&mut buf, OSC_ADDRESS);
    push_padded_str(&mut buf, TYPE_TAGS);
    buf.extend_from_slice(&metric_value.to_be_bytes());
    buf.extend_from_slice(&level.to_be_bytes());
    buf
}

fn read_padded_str(bytes: &[u8], offset: usize) -> Result<(&str, usize), OscDecodeError> {
    let rest = bytes.get(offset..).ok_or(OscDecodeError::Truncated(offset))?;
    let nul = rest
        .iter()
        .position(|&b| b == 0)
        .ok_or(OscDecodeError::BadString(offset))?;
    let padded = (nul + 4) & !3;
    if rest.len() < padded || rest[nul..padded].iter().any(|&b| b != 0) {
        return Err(OscDecodeError::BadString(offset));
    }
    let s = core::str::from_utf8(&rest[..nul]).map_err(|_| OscDecodeError::BadString(offset))?;
    Ok((s, offset + padded))
}

fn read_word(bytes: &[u8], offset: usize) -> Result<[u8; 4], OscDecodeError> {
    bytes
        .get(offset..offset + 4)
        .and_then(|w| w.try_into().ok())
        .ok_or(OscDecodeError::Truncated(offset))
}

/// Inverse of [`encode_osc`].
pub fn decode_osc(bytes: &[u8]) -> Result<(f32, i32), OscDecodeError> {
    let (address, offset) = read_padded_str(bytes, 0)?;
    if address != OSC_ADDRESS {
        return Err(OscDecodeError::Address);
    }
    let (tags, offset) = read_padded_str(bytes, offset)?;
    if tags != TYPE_TAGS {
        return Err(OscDecodeError::TypeTags);
    }
    let metric = f32::from_be_bytes(read_word(bytes, offset)?);
    let level = i32::from_be_bytes(read_word(bytes, offset + 4)?);
    Ok((metric, level))
}
