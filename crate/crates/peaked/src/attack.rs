//! Shared attack primitives: turning single-qubit expectation values or
//! measured samples into a candidate bitstring and scoring candidates against
//! a known secret.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitString;
use crate::circuit::Circuit;
use crate::statevector::{simulate, SimError};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("majority vote needs at least one sample")]
    NoSamples,
    #[error("sample {index} has {got} bits, expected {expected}")]
    SampleLengthMismatch { index: usize, expected: usize, got: usize },
}

/// Sign rule: bit `i` is 0 when `<Z_i> >= 0` (a vanishing estimate counts as
/// zero, i.e. bit 0).
pub fn bits_from_z(z: &[f64]) -> BitString {
    BitString::from_bits(z.iter().map(|&v| if v >= 0.0 { 0u8 } else { 1u8 }).collect())
}

/// Fraction of correctly recovered bits, `(n - hamming) / n`.
pub fn recovery_fraction(candidate: &BitString, secret: &BitString) -> f64 {
    let h = candidate.hamming(secret).expect("candidate and secret have equal length");
    (secret.len() - h) as f64 / secret.len() as f64
}

/// Candidate bitstring derived from per-qubit estimates, with overlap
/// `O = N - |s - s_hat|_1` and recovery `R = O / N` filled in when the true
/// string is known.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginalAttackResult {
    /// Which attack produced the estimates (e.g. "sv", "mps", "vote").
    pub source: String,
    pub candidate: BitString,
    pub estimates: Vec<f64>,
    pub overlap: Option<usize>,
    pub recovery: Option<f64>,
}

/// Apply the sign rule to `<Z_i>` estimates and score the result.
pub fn marginal_attack(
    estimates: &[f64],
    truth: Option<&BitString>,
    source: &str,
) -> MarginalAttackResult {
    let candidate = bits_from_z(estimates);
    let (overlap, recovery) = match truth {
        Some(s) => {
            let h = candidate.hamming(s).expect("estimate length matches secret");
            (Some(s.len() - h), Some((s.len() - h) as f64 / s.len() as f64))
        }
        None => (None, None),
    };
    MarginalAttackResult {
        source: source.to_string(),
        candidate,
        estimates: estimates.to_vec(),
        overlap,
        recovery,
    }
}

/// Dense-oracle marginal attack: simulate on `|0^N>`, read each `<Z_i>`, and
/// apply the sign rule.
pub fn statevector_attack(
    c: &Circuit,
    truth: Option<&BitString>,
) -> Result<MarginalAttackResult, SimError> {
    let sv = simulate(c, &BitString::zeros(c.n_qubits))?;
    Ok(marginal_attack(&sv.z_expectations(), truth, "sv"))
}

/// Per-bit majority vote over measured samples (a tie votes for bit 0). The
/// reported estimates are the empirical `<Z_i>` of the sample set, so the
/// sign rule reproduces the majority.
pub fn majority_vote_attack(
    samples: &[BitString],
    truth: Option<&BitString>,
) -> Result<MarginalAttackResult, AttackError> {
    let first = samples.first().ok_or(AttackError::NoSamples)?;
    let n = first.len();
    let mut ones = vec![0usize; n];
    for (index, s) in samples.iter().enumerate() {
        if s.len() != n {
            return Err(AttackError::SampleLengthMismatch { index, expected: n, got: s.len() });
        }
        for (i, count) in ones.iter_mut().enumerate() {
            *count += s.bit(i) as usize;
        }
    }
    let total = samples.len() as f64;
    let estimates: Vec<f64> =
        ones.iter().map(|&c| (total - 2.0 * c as f64) / total).collect();
    Ok(marginal_attack(&estimates, truth, "vote"))
}
