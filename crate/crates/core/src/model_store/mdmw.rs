use serde::{Deserialize, Serialize};

use super::ModelStoreError;

pub const MDMW_MAGIC: [u8; 4] = *b"MDMW";
pub const MDMW_VERSION: u32 = 1;

/// A dense binary64 tensor in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub shape: Vec<u32>,
    pub data: Vec<f64>,
}

impl Weights {
    pub fn new(shape: Vec<u32>, data: Vec<f64>) -> Result<Self, ModelStoreError> {
        let w = Self { shape, data };
        w.validate()?;
        Ok(w)
    }

    pub fn numel(&self) -> Option<usize> {
        self.shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
    }

    pub(crate) fn validate(&self) -> Result<(), ModelStoreError> {
        if self.numel() != Some(self.data.len()) {
            return Err(ModelStoreError::Format {
                offset: 0,
                reason: format!("shape {:?} does not hold {} values", self.shape, self.data.len()),
            });
        }
        Ok(())
    }

    /// Bit-level equality (distinguishes -0.0 and NaN payloads).
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self.data.len() == other.data.len()
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

pub(crate) fn header_len(rank: usize) -> usize {
    12 + 4 * rank
}

pub fn encode_mdmw(w: &Weights) -> Vec<u8> {
    let mut out = Vec::with_capacity(header_len(w.shape.len()) + 8 * w.data.len());
    out.extend_from_slice(&MDMW_MAGIC);
    out.extend_from_slice(&MDMW_VERSION.to_le_bytes());
    out.extend_from_slice(&(w.shape.len() as u32).to_le_bytes());
    for d in &w.shape {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in &w.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], offset: usize) -> Result<u32, ModelStoreError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or(ModelStoreError::Format { offset: offset as u64, reason: "truncated header".into() })
}

/// Parses an `MDMW` buffer. Returns the tensor and the number of bytes it
/// occupied, so callers can read trailing sections.
pub(crate) fn decode_prefix(bytes: &[u8]) -> Result<(Weights, usize), ModelStoreError> {
    if bytes.len() < 4 || bytes[..4] != MDMW_MAGIC {
        return Err(ModelStoreError::Format { offset: 0, reason: "bad magic".into() });
    }
    let version = u32_at(bytes, 4)?;
    if version != MDMW_VERSION {
        return Err(ModelStoreError::Format { offset: 4, reason: format!("unsupported version {version}") });
    }
    let rank = u32_at(bytes, 8)? as usize;
    let shape = (0..rank).map(|i| u32_at(bytes, 12 + 4 * i)).collect::<Result<Vec<_>, _>>()?;
    let start = header_len(rank);
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .filter(|n| n.checked_mul(8).is_some())
        .ok_or(ModelStoreError::Format { offset: 12, reason: "shape overflows".into() })?;
    let end = start + 8 * n;
    let body = bytes.get(start..end).ok_or(ModelStoreError::Format {
        offset: bytes.len() as u64,
        reason: format!("expected {n} values, data ends early"),
    })?;
    let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((Weights { shape, data }, end))
}

pub fn decode_mdmw(bytes: &[u8]) -> Result<Weights, ModelStoreError> {
    let (w, end) = decode_prefix(bytes)?;
    if end != bytes.len() {
        return Err(ModelStoreError::Format { offset: end as u64, reason: "trailing bytes".into() });
    }
    Ok(w)
}
