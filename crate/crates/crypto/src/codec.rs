//! Fixed-point reading encoding and the canonical `C || TS` payload.

use num_bigint::BigUint;
use num_traits::ToPrimitive;

use crate::error::{CryptoError, Result};
use crate::paillier::Ciphertext;

/// Plaintext units per kWh (Wh resolution).
pub const READING_SCALE: u64 = 1000;

/// Maps kWh readings onto integer plaintexts, sized so that the sum over all
/// meters cannot wrap modulo `n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReadingCodec {
    limit: u64,
}

impl ReadingCodec {
    /// Per-meter bound is `n / meter_count`.
    pub fn new(n: &BigUint, meter_count: usize) -> Result<Self> {
        if meter_count == 0 {
            return Err(CryptoError::Argument("meter count must be positive".into()));
        }
        let bound = n / BigUint::from(meter_count);
        Ok(Self {
            limit: bound.to_u64().unwrap_or(u64::MAX),
        })
    }

    /// Largest accepted encoded value (exclusive).
    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn encode(&self, kwh: f64) -> Result<u64> {
        if !kwh.is_finite() || kwh < 0.0 {
            return Err(CryptoError::Argument(format!("reading must be finite and non-negative, got {kwh}")));
        }
        let scaled = (kwh * READING_SCALE as f64).round();
        if scaled >= self.limit as f64 {
            return Err(CryptoError::Overflow(format!(
                "{kwh} kWh encodes past the per-meter limit {}",
                self.limit
            )));
        }
        Ok(scaled as u64)
    }

    pub fn decode(units: u64) -> f64 {
        units as f64 / READING_SCALE as f64
    }

    /// Decodes an aggregate plaintext back to integer units.
    pub fn units_of(plaintext: &BigUint) -> Result<u64> {
        plaintext
            .to_u64()
            .ok_or_else(|| CryptoError::Overflow("aggregate exceeds 64 bits".into()))
    }
}

/// `len(C) as u32 BE || C (BE magnitude) || TS as u64 BE`
pub fn canonical_payload(c: &Ciphertext, timestamp_ms: u64) -> Vec<u8> {
    let bytes = c.to_bytes();
    let mut out = Vec::with_capacity(12 + bytes.len());
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(&bytes);
    out.extend_from_slice(&timestamp_ms.to_be_bytes());
    out
}

/// Inverse of [`canonical_payload`].
pub fn parse_payload(bytes: &[u8]) -> Result<(Ciphertext, u64)> {
    let short = || CryptoError::Encoding(format!("payload of {} bytes is truncated", bytes.len()));
    let len_bytes: [u8; 4] = bytes.get(..4).ok_or_else(short)?.try_into().unwrap();
    let len = u32::from_be_bytes(len_bytes) as usize;
    if bytes.len() != 4 + len + 8 {
        return Err(CryptoError::Encoding(format!(
            "length prefix {len} does not match payload size {}",
            bytes.len()
        )));
    }
    let c = Ciphertext::from_bytes(&bytes[4..4 + len]);
    let ts = u64::from_be_bytes(bytes[4 + len..].try_into().unwrap());
    Ok((c, ts))
}
