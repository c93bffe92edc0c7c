//! Fixed-length bitstrings.
//!
//! Qubit `0` is always the leftmost character of the textual form, and maps to
//! the most significant bit of the dense amplitude index. With that choice,
//! ascending amplitude index order coincides with lexicographic order of the
//! textual bitstrings.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BitStringError {
    /// A character other than '0' or '1' was found.
    #[error("invalid bit character {found:?} at position {pos}")]
    InvalidChar { pos: usize, found: char },
    /// Lengths of two operands do not match.
    #[error("bitstring length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

/// A bitstring of fixed length; bit `i` belongs to qubit `i`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString(Vec<u8>);

impl BitString {
    /// All-zero string of length `n`.
    pub fn zeros(n: usize) -> Self {
        BitString(vec![0; n])
    }

    /// Build from raw bits; every entry must be 0 or 1.
    pub fn from_bits(bits: Vec<u8>) -> Self {
        assert!(bits.iter().all(|&b| b <= 1), "bits must be 0 or 1");
        BitString(bits)
    }

    /// Parse a textual bitstring such as `"0110"`.
    pub fn parse(s: &str) -> Result<Self, BitStringError> {
        let mut bits = Vec::with_capacity(s.len());
        for (pos, c) in s.chars().enumerate() {
            match c {
                '0' => bits.push(0),
                '1' => bits.push(1),
                found => return Err(BitStringError::InvalidChar { pos, found }),
            }
        }
        Ok(BitString(bits))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn bit(&self, i: usize) -> u8 {
        self.0[i]
    }

    pub fn set_bit(&mut self, i: usize, value: u8) {
        assert!(value <= 1);
        self.0[i] = value;
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] ^= 1;
    }

    /// Dense amplitude index; qubit 0 is the most significant bit.
    pub fn to_index(&self) -> usize {
        self.0.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize)
    }

    /// Inverse of [`BitString::to_index`] for a register of `n` qubits.
    pub fn from_index(index: usize, n: usize) -> Self {
        let mut bits = vec![0u8; n];
        for (i, bit) in bits.iter_mut().enumerate() {
            *bit = ((index >> (n - 1 - i)) & 1) as u8;
        }
        BitString(bits)
    }

    pub fn xor(&self, other: &BitString) -> Result<BitString, BitStringError> {
        if self.len() != other.len() {
            return Err(BitStringError::LengthMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        Ok(BitString(
            self.0.iter().zip(&other.0).map(|(a, b)| a ^ b).collect(),
        ))
    }

    /// Hamming distance to `other`; lengths must match.
    pub fn hamming(&self, other: &BitString) -> Result<usize, BitStringError> {
        if self.len() != other.len() {
            return Err(BitStringError::LengthMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        Ok(self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count())
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            write!(f, "{}", b)?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({})", self)
    }
}

impl std::str::FromStr for BitString {
    type Err = BitStringError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BitString::parse(s)
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        BitString::parse(&s).map_err(serde::de::Error::custom)
    }
}
