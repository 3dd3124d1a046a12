//! Raw image files of the scene archive: magic `PDEP`, `u32` height,
//! `u32` width, then `height · width · channels` little-endian `f32` values
//! in row-major order with channels interleaved.

use crate::{Error, Result};

pub const PDEP_MAGIC: &[u8; 4] = b"PDEP";
const HEADER_LEN: usize = 12;

/// Decoded image data.
#[derive(Clone, Debug, PartialEq)]
pub struct RawImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

pub fn encode_pdep(height: usize, width: usize, channels: usize, data: &[f32]) -> Result<Vec<u8>> {
    if data.len() != height * width * channels {
        return Err(Error::LengthMismatch(data.len(), height * width * channels));
    }
    let h = u32::try_from(height).map_err(|_| Error::invalid("image height exceeds u32"))?;
    let w = u32::try_from(width).map_err(|_| Error::invalid("image width exceeds u32"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * data.len());
    out.extend_from_slice(PDEP_MAGIC);
    out.extend_from_slice(&h.to_le_bytes());
    out.extend_from_slice(&w.to_le_bytes());
    for x in data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

/// Decodes an image with a known channel count. The payload length must
/// match the header exactly.
pub fn decode_pdep(bytes: &[u8], channels: usize) -> Result<RawImage> {
    if channels == 0 {
        return Err(Error::invalid("channel count must be positive"));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::parse(format!("{} bytes is too short for a PDEP header", bytes.len())));
    }
    if &bytes[..4] != PDEP_MAGIC {
        return Err(Error::parse("missing PDEP magic"));
    }
    let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    let expected = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(channels))
        .and_then(|n| n.checked_mul(4));
    if expected != Some(payload.len()) {
        return Err(Error::parse(format!(
            "{height}x{width}x{channels} image needs {} payload bytes, found {}",
            expected.map_or_else(|| "too many".to_string(), |n| n.to_string()),
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(RawImage {
        height,
        width,
        channels,
        data,
    })
}
