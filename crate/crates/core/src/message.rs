use std::fmt;
use std::str::FromStr;

use crate::error::{AswError, Result};
use crate::rng::Philox;

/// A binary watermark payload.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WatermarkMessage {
    bits: Vec<u8>,
}

impl WatermarkMessage {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(AswError::InvalidMessage("message must have at least one bit".into()));
        }
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(AswError::InvalidMessage(format!("bit value {b} is not 0 or 1")));
        }
        Ok(WatermarkMessage { bits })
    }

    pub fn from_bools(bits: &[bool]) -> Result<Self> {
        Self::new(bits.iter().map(|&b| u8::from(b)).collect())
    }

    /// Uniformly random message of `len` bits.
    pub fn random(len: usize, rng: &mut Philox) -> Self {
        let bits = (0..len).map(|_| (rng.next_u32() & 1) as u8).collect();
        WatermarkMessage { bits }
    }

    /// Parse `"0101…"`, or hex (`"0x…"`) truncated to `len` bits, MSB first.
    pub fn parse(s: &str, len: Option<usize>) -> Result<Self> {
        let s = s.trim();
        let msg = if let Some(hex_digits) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
            let mut bits = Vec::with_capacity(hex_digits.len() * 4);
            for ch in hex_digits.chars() {
                let nib = ch.to_digit(16).ok_or_else(|| {
                    AswError::InvalidMessage(format!("invalid hex digit {ch:?}"))
                })?;
                bits.extend((0..4).rev().map(|i| ((nib >> i) & 1) as u8));
            }
            if let Some(n) = len {
                if n > bits.len() {
                    return Err(AswError::InvalidMessage(format!(
                        "hex message has {} bits, need {n}",
                        bits.len()
                    )));
                }
                if bits[..bits.len() - n].iter().any(|&b| b == 1) {
                    return Err(AswError::InvalidMessage(format!(
                        "hex message does not fit in {n} bits"
                    )));
                }
                bits.drain(..bits.len() - n);
            }
            Self::new(bits)?
        } else {
            let bits = s
                .chars()
                .map(|c| match c {
                    '0' => Ok(0u8),
                    '1' => Ok(1u8),
                    other => Err(AswError::InvalidMessage(format!(
                        "invalid bit character {other:?}"
                    ))),
                })
                .collect::<Result<Vec<_>>>()?;
            Self::new(bits)?
        };
        if let Some(n) = len {
            if msg.len() != n {
                return Err(AswError::InvalidMessage(format!(
                    "message has {} bits, expected {n}",
                    msg.len()
                )));
            }
        }
        Ok(msg)
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn hamming(&self, other: &WatermarkMessage) -> Result<usize> {
        if self.len() != other.len() {
            return Err(AswError::InvalidMessage(format!(
                "length mismatch: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count())
    }

    pub fn complement(&self) -> Self {
        WatermarkMessage {
            bits: self.bits.iter().map(|b| 1 - b).collect(),
        }
    }
}

impl fmt::Display for WatermarkMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl FromStr for WatermarkMessage {
    type Err = AswError;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s, None)
    }
}
