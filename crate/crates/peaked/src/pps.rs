//! Pauli-path (Heisenberg) estimation of `<Z_i>` with coefficient
//! truncation, and the per-qubit convergence-scan cracking protocol.
//!
//! The observable `Z_i` is conjugated backwards through the gate list. Each
//! rotation `exp(-i theta P / 2)` maps an anticommuting Pauli `Q` to
//! `cos(theta) Q + sin(theta) (iPQ)`; commuting terms pass through. All
//! coefficients stay real because terms are expressed in the Hermitian
//! basis `P(x,z) = i^{|x&z|} X^x Z^z`. After every gate, terms with small
//! coefficients are dropped: `|c| <= delta` (standard scheme) or
//! `|c| <= ||O|| delta` (relative scheme, never more aggressive since the
//! surviving norm never exceeds 1).

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitString;
use crate::circuit::{Circuit, Gate};

/// Masks are stored in `u64`, so the simulator handles up to 64 qubits.
pub const MAX_PPS_QUBITS: usize = 64;

#[derive(Debug, Error)]
pub enum PpsError {
    #[error("term cap {cap} exceeded at gate {step} ({terms} terms)")]
    CapExceeded { step: usize, terms: usize, cap: usize },
    #[error("gate {0} has no Pauli conjugation rule")]
    UnsupportedGate(String),
    #[error("{0} qubits exceed the {MAX_PPS_QUBITS}-qubit mask limit")]
    TooManyQubits(usize),
    #[error("qubit {qubit} out of range for {n} qubits")]
    QubitOutOfRange { qubit: usize, n: usize },
    #[error("bad schedule: {0}")]
    BadSchedule(String),
}

pub type PpsResult<T> = Result<T, PpsError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruncationScheme {
    /// Drop terms with `|c| <= delta`.
    Standard,
    /// Drop terms with `|c| <= ||O_k|| * delta`.
    Relative,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PpsConfig {
    pub scheme: TruncationScheme,
    /// Hard term-count limit; exceeding it is an explicit failure.
    pub cap: usize,
    /// Crack threshold: `|estimate| >= f_min * surviving norm`.
    pub f_min: f64,
}

impl Default for PpsConfig {
    fn default() -> Self {
        PpsConfig { scheme: TruncationScheme::Standard, cap: 1 << 24, f_min: 0.1 }
    }
}

/// The paper-style schedule: `3.2e-3` halving down to `2.5e-5`.
pub fn default_delta_schedule() -> Vec<f64> {
    let mut out = Vec::new();
    let mut d = 3.2e-3;
    while d >= 2.5e-5 - 1e-12 {
        out.push(d);
        d /= 2.0;
    }
    out
}

// ---------------------------------------------------------------------------
// Pauli algebra on (x, z) masks
// ---------------------------------------------------------------------------

/// Deduplicated real-coefficient Pauli sum; insertion order is deterministic
/// given the gate sequence, which keeps downstream records byte-stable.
#[derive(Debug, Clone, Default)]
pub struct PauliSum {
    pub terms: IndexMap<(u64, u64), f64>,
}

impl PauliSum {
    pub fn single(x: u64, z: u64, c: f64) -> Self {
        let mut terms = IndexMap::new();
        terms.insert((x, z), c);
        PauliSum { terms }
    }

    pub fn norm(&self) -> f64 {
        self.terms.values().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Sum of coefficients of Z-diagonal strings: `<0^N| O |0^N>`.
    pub fn zero_state_expectation(&self) -> f64 {
        self.terms.iter().filter(|((x, _), _)| *x == 0).map(|(_, c)| *c).sum()
    }
}

/// Sign of `i * P(x1,z1) * P(x2,z2)` for anticommuting Hermitian Paulis,
/// whose product is `i^k P(x1^x2, z1^z2)` with `k` odd.
fn i_product_sign(x1: u64, z1: u64, x2: u64, z2: u64) -> f64 {
    let x3 = x1 ^ x2;
    let z3 = z1 ^ z2;
    // P(x,z) = i^{|x&z|} X^x Z^z ; moving Z^{z1} past X^{x2} costs (-1)^{|z1&x2|}
    let k = (x1 & z1).count_ones() as i64 + (x2 & z2).count_ones() as i64
        - (x3 & z3).count_ones() as i64
        + 2 * (z1 & x2).count_ones() as i64
        + 1; // the extra factor of i
    debug_assert!(k.rem_euclid(2) == 0, "i*P*Q must be Hermitian (real sign)");
    if k.rem_euclid(4) == 0 {
        1.0
    } else {
        -1.0
    }
}

enum Rule {
    /// `exp(-i theta P/2)` rotation about the Hermitian Pauli `(x, z)`.
    Rotation { x: u64, z: u64, theta: f64 },
    /// Pauli-X conjugation: flips the sign of terms with Z on the qubit.
    FlipX { q: usize },
    /// Exchange the two qubits' mask bits.
    Swap { a: usize, b: usize },
}

fn rule_for(gate: &Gate) -> PpsResult<Rule> {
    Ok(match gate {
        Gate::Rx { q, theta } => Rule::Rotation { x: 1u64 << q, z: 0, theta: *theta },
        Gate::Rz { q, theta } => Rule::Rotation { x: 0, z: 1u64 << q, theta: *theta },
        Gate::Rzz { a, b, theta } => {
            Rule::Rotation { x: 0, z: (1u64 << a) | (1u64 << b), theta: *theta }
        }
        Gate::X { q } => Rule::FlipX { q: *q },
        Gate::Swap { a, b } => Rule::Swap { a: *a, b: *b },
        Gate::Mcry { .. } | Gate::Mcx { .. } => {
            return Err(PpsError::UnsupportedGate(gate.name().to_string()))
        }
    })
}

fn swap_bit(mask: u64, a: usize, b: usize) -> u64 {
    let ba = (mask >> a) & 1;
    let bb = (mask >> b) & 1;
    if ba == bb {
        mask
    } else {
        mask ^ (1u64 << a) ^ (1u64 << b)
    }
}

/// Conjugate the sum by one gate: `O <- g^dag O g`.
fn conjugate_gate(sum: &PauliSum, gate: &Gate) -> PpsResult<PauliSum> {
    let rule = rule_for(gate)?;
    let mut out: IndexMap<(u64, u64), f64> = IndexMap::with_capacity(sum.terms.len() * 2);
    match rule {
        Rule::Rotation { x: px, z: pz, theta } => {
            let (sin, cos) = theta.sin_cos();
            for (&(x, z), &c) in &sum.terms {
                // P and Q anticommute iff the symplectic product is odd
                let anti = ((px & z).count_ones() + (pz & x).count_ones()) % 2 == 1;
                if !anti {
                    *out.entry((x, z)).or_insert(0.0) += c;
                } else {
                    *out.entry((x, z)).or_insert(0.0) += c * cos;
                    let sign = i_product_sign(px, pz, x, z);
                    *out.entry((px ^ x, pz ^ z)).or_insert(0.0) += c * sin * sign;
                }
            }
        }
        Rule::FlipX { q } => {
            let m = 1u64 << q;
            for (&(x, z), &c) in &sum.terms {
                let flipped = if z & m != 0 { -c } else { c };
                *out.entry((x, z)).or_insert(0.0) += flipped;
            }
        }
        Rule::Swap { a, b } => {
            for (&(x, z), &c) in &sum.terms {
                *out.entry((swap_bit(x, a, b), swap_bit(z, a, b))).or_insert(0.0) += c;
            }
        }
    }
    Ok(PauliSum { terms: out })
}

/// Conjugate a Pauli sum by a single gate in the Heisenberg picture:
/// `O <- g^dag O g`.
pub fn conjugate_pauli_sum(sum: &PauliSum, gate: &Gate) -> PpsResult<PauliSum> {
    conjugate_gate(sum, gate)
}

fn truncate(sum: &mut PauliSum, delta: f64, scheme: TruncationScheme) {
    let threshold = match scheme {
        TruncationScheme::Standard => delta,
        TruncationScheme::Relative => sum.norm() * delta,
    };
    sum.terms.retain(|_, c| c.abs() > threshold && *c != 0.0);
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PpsStats {
    pub peak_terms: usize,
    pub final_terms: usize,
    /// `||O||` of the surviving sum after the full backward evolution.
    pub surviving_norm: f64,
    pub gates_applied: usize,
}

/// Backward-evolve `Z_i` through the whole circuit and return the estimate
/// `<0^N| O |0^N>` together with term statistics.
pub fn pps_expectation(
    c: &Circuit,
    qubit: usize,
    delta: f64,
    scheme: TruncationScheme,
    cap: usize,
) -> PpsResult<(f64, PpsStats)> {
    if c.n_qubits > MAX_PPS_QUBITS {
        return Err(PpsError::TooManyQubits(c.n_qubits));
    }
    if qubit >= c.n_qubits {
        return Err(PpsError::QubitOutOfRange { qubit, n: c.n_qubits });
    }
    if !(delta > 0.0) {
        return Err(PpsError::BadSchedule(format!("delta {delta} must be positive")));
    }
    let mut sum = PauliSum::single(0, 1u64 << qubit, 1.0);
    let mut peak_terms = sum.len();
    for (idx, gate) in c.gates.iter().enumerate().rev() {
        sum = conjugate_gate(&sum, gate)?;
        truncate(&mut sum, delta, scheme);
        peak_terms = peak_terms.max(sum.len());
        if sum.len() > cap {
            return Err(PpsError::CapExceeded { step: idx, terms: sum.len(), cap });
        }
    }
    let stats = PpsStats {
        peak_terms,
        final_terms: sum.len(),
        surviving_norm: sum.norm(),
        gates_applied: c.len(),
    };
    Ok((sum.zero_state_expectation(), stats))
}

// ---------------------------------------------------------------------------
// Convergence scan and cracking
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaEntry {
    pub delta: f64,
    /// Missing when this step hit the term cap.
    pub estimate: Option<f64>,
    pub peak_terms: usize,
    pub surviving_norm: f64,
    pub completed: bool,
    /// Wall time; excluded from determinism comparisons.
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub qubit: usize,
    pub entries: Vec<DeltaEntry>,
    pub cracked: bool,
    /// Index into the schedule where the 3-in-a-row rule first held.
    pub crack_step: Option<usize>,
    /// Recovered bit (0 when the converged estimate is nonnegative).
    pub bit: Option<u8>,
    /// True when the cap stopped the scan before the schedule was exhausted.
    pub incomplete: bool,
}

fn bit_of(estimate: f64) -> u8 {
    if estimate >= 0.0 {
        0
    } else {
        1
    }
}

/// Shrink `delta` down the schedule until the estimated sign of `<Z_i>` has
/// agreed for three successive steps (and matches `true_bit` when given)
/// with magnitude at least `f_min` of the surviving operator weight. A cap
/// hit ends the scan early: smaller deltas only retain more terms, so the
/// rest of the schedule is recorded as incomplete.
pub fn pps_convergence_scan(
    c: &Circuit,
    qubit: usize,
    schedule: &[f64],
    true_bit: Option<u8>,
    cfg: &PpsConfig,
) -> PpsResult<ConvergenceReport> {
    if schedule.is_empty() {
        return Err(PpsError::BadSchedule("empty schedule".to_string()));
    }
    if schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(PpsError::BadSchedule("schedule must be strictly decreasing".to_string()));
    }
    let mut entries = Vec::new();
    let mut bits: Vec<u8> = Vec::new();
    let mut cracked = false;
    let mut crack_step = None;
    let mut bit = None;
    let mut incomplete = false;

    for (j, &delta) in schedule.iter().enumerate() {
        let t0 = std::time::Instant::now();
        match pps_expectation(c, qubit, delta, cfg.scheme, cfg.cap) {
            Ok((estimate, stats)) => {
                entries.push(DeltaEntry {
                    delta,
                    estimate: Some(estimate),
                    peak_terms: stats.peak_terms,
                    surviving_norm: stats.surviving_norm,
                    completed: true,
                    seconds: t0.elapsed().as_secs_f64(),
                });
                bits.push(bit_of(estimate));
                let three_agree = bits.len() >= 3 && {
                    let k = bits.len();
                    bits[k - 1] == bits[k - 2] && bits[k - 2] == bits[k - 3]
                };
                let matches_truth = true_bit.map_or(true, |t| t == bit_of(estimate));
                let heavy_enough = estimate.abs() >= cfg.f_min * stats.surviving_norm;
                if three_agree && matches_truth && heavy_enough {
                    cracked = true;
                    crack_step = Some(j);
                    bit = Some(bit_of(estimate));
                    break;
                }
            }
            Err(PpsError::CapExceeded { step, terms, cap }) => {
                entries.push(DeltaEntry {
                    delta,
                    estimate: None,
                    peak_terms: terms,
                    surviving_norm: 0.0,
                    completed: false,
                    seconds: t0.elapsed().as_secs_f64(),
                });
                let _ = (step, cap);
                incomplete = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ConvergenceReport { qubit, entries, cracked, crack_step, bit, incomplete })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QubitDifficulty {
    pub qubit: usize,
    pub cracked: bool,
    pub crack_step: Option<usize>,
    pub peak_terms: usize,
    pub correct: Option<bool>,
    /// Wall time; excluded from determinism comparisons.
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrackProfile {
    /// Per-qubit results ordered by difficulty. Wall time is reported but
    /// the ordering key is deterministic: schedule step at crack, then peak
    /// term count, then qubit index (uncracked qubits last).
    pub profile: Vec<QubitDifficulty>,
    pub fully_solved: bool,
    pub uncracked: Vec<usize>,
    /// Bits recovered from cracked qubits; `None` where uncracked.
    pub bits: Vec<Option<u8>>,
}

/// Run the convergence scan on every qubit against a known secret and order
/// the results by difficulty.
pub fn pps_crack(
    c: &Circuit,
    s: &BitString,
    schedule: &[f64],
    cfg: &PpsConfig,
) -> PpsResult<CrackProfile> {
    let n = c.n_qubits;
    let mut rows = Vec::with_capacity(n);
    let mut bits = vec![None; n];
    for q in 0..n {
        let t0 = std::time::Instant::now();
        let report = pps_convergence_scan(c, q, schedule, Some(s.bit(q)), cfg)?;
        let peak = report.entries.iter().map(|e| e.peak_terms).max().unwrap_or(0);
        bits[q] = report.bit;
        rows.push(QubitDifficulty {
            qubit: q,
            cracked: report.cracked,
            crack_step: report.crack_step,
            peak_terms: peak,
            correct: report.bit.map(|b| b == s.bit(q)),
            seconds: t0.elapsed().as_secs_f64(),
        });
    }
    rows.sort_by_key(|r| {
        (!r.cracked, r.crack_step.unwrap_or(usize::MAX), r.peak_terms, r.qubit)
    });
    let uncracked: Vec<usize> = rows.iter().filter(|r| !r.cracked).map(|r| r.qubit).collect();
    let fully_solved = uncracked.is_empty();
    Ok(CrackProfile { profile: rows, fully_solved, uncracked, bits })
}
