//! The peakedness-check hardness gadget: wraps a verifier circuit into a
//! larger circuit whose diagonal elements on canonical basis states encode the
//! verifier's acceptance probability, `|<z|Z|z>| = p(y) + (1 - p(y)) cos(phi)`,
//! while every basis state with non-canonical ancillas has a vanishing
//! diagonal (a guard qubit is flipped to an orthogonal state).
//!
//! Layout: the verifier acts on witness register Y, ancilla register A and a
//! single output qubit B; the gadget appends a marker qubit C and a guard
//! qubit D. The gadget applies, in order, G (guard flip outside the canonical
//! ancilla sector), R1 = R(phi) on C controlled on A = 0^a, the verifier U,
//! R2 = R(-phi) on C controlled on B = 1, and finally U^dagger, where
//! R(phi) = RY(2 phi).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitString;
use crate::circuit::{Circuit, Gate};
use crate::statevector::{simulate, SimError};
use num_complex::Complex64 as C64;

#[derive(Debug, Error)]
pub enum PcbsError {
    #[error("bad register partition: {0}")]
    BadRegisters(String),
    #[error("phi must lie strictly between 0 and pi/2, got {phi}")]
    BadAngle { phi: f64 },
    #[error("thresholds must satisfy 1 >= c > s >= 0, got c={c}, s={s}")]
    BadThresholds { c: f64, s: f64 },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Which qubits of the verifier circuit play which role.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegisterPartition {
    /// Witness qubits (N_x of them).
    pub y: Vec<usize>,
    /// Ancilla qubits (M_x of them).
    pub a: Vec<usize>,
    /// The single output qubit.
    pub b: usize,
}

/// A verifier circuit together with its register partition.
#[derive(Debug, Clone)]
pub struct VerifierSpec {
    pub circuit: Circuit,
    pub registers: RegisterPartition,
}

impl VerifierSpec {
    /// Check that the registers are disjoint and exactly cover the circuit.
    pub fn validate(&self) -> Result<(), PcbsError> {
        let n = self.circuit.n_qubits;
        let mut seen = vec![false; n];
        let mut claim = |q: usize, role: &str| -> Result<(), PcbsError> {
            if q >= n {
                return Err(PcbsError::BadRegisters(format!(
                    "{role} qubit {q} out of range for {n} qubits"
                )));
            }
            if seen[q] {
                return Err(PcbsError::BadRegisters(format!("qubit {q} assigned twice")));
            }
            seen[q] = true;
            Ok(())
        };
        for &q in &self.registers.y {
            claim(q, "witness")?;
        }
        for &q in &self.registers.a {
            claim(q, "ancilla")?;
        }
        claim(self.registers.b, "output")?;
        if let Some(q) = seen.iter().position(|&s| !s) {
            return Err(PcbsError::BadRegisters(format!("qubit {q} not assigned to any register")));
        }
        Ok(())
    }

    pub fn n_witness(&self) -> usize {
        self.registers.y.len()
    }

    pub fn n_ancilla(&self) -> usize {
        self.registers.a.len()
    }

    /// Acceptance probability of witness `y`: run the verifier on
    /// `|y, 0^a, 0>` and project the output qubit onto 1.
    pub fn acceptance_probability(&self, y: &BitString) -> Result<f64, PcbsError> {
        assert_eq!(y.len(), self.n_witness(), "witness length mismatch");
        let n = self.circuit.n_qubits;
        let mut input = BitString::zeros(n);
        for (i, &q) in self.registers.y.iter().enumerate() {
            input.set_bit(q, y.bit(i));
        }
        let sv = simulate(&self.circuit, &input)?;
        let b_mask = 1usize << (n - 1 - self.registers.b);
        let p = sv
            .probabilities()
            .iter()
            .enumerate()
            .filter(|(idx, _)| idx & b_mask != 0)
            .map(|(_, p)| p)
            .sum();
        Ok(p)
    }
}

/// The assembled gadget and everything needed to interpret its diagonal.
#[derive(Debug, Clone)]
pub struct PcbsInstance {
    pub circuit: Circuit,
    pub phi: f64,
    pub registers: RegisterPartition,
    /// Marker qubit C (first appended qubit).
    pub marker: usize,
    /// Guard qubit D (second appended qubit).
    pub guard: usize,
    pub delta_yes: f64,
    pub delta_no: f64,
    pub gap: f64,
}

/// Threshold mapping `f(p) = p + (1 - p) cos(phi)` applied to a completeness/
/// soundness pair.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PcbsThresholds {
    pub delta_yes: f64,
    pub delta_no: f64,
    pub gap: f64,
}

/// Map verifier completeness `c` and soundness `s` to overlap thresholds:
/// `delta_yes = f(c)`, `delta_no = f(s)`, `gap = (1 - cos(phi)) (c - s)`.
pub fn pcbs_thresholds(c: f64, s: f64, phi: f64) -> Result<PcbsThresholds, PcbsError> {
    if !(phi > 0.0 && phi < std::f64::consts::FRAC_PI_2) {
        return Err(PcbsError::BadAngle { phi });
    }
    if !(c <= 1.0 && c > s && s >= 0.0) {
        return Err(PcbsError::BadThresholds { c, s });
    }
    let f = |p: f64| p + (1.0 - p) * phi.cos();
    Ok(PcbsThresholds {
        delta_yes: f(c),
        delta_no: f(s),
        gap: (1.0 - phi.cos()) * (c - s),
    })
}

/// Default verifier promise: accepts with probability >= 2/3 on YES
/// instances and <= 1/3 on NO instances.
pub const DEFAULT_COMPLETENESS: f64 = 2.0 / 3.0;
pub const DEFAULT_SOUNDNESS: f64 = 1.0 / 3.0;

/// Build the gadget `G, R1, U, R2, U^dagger` (left-to-right application
/// order) on the verifier's qubits plus marker C and guard D. Thresholds are
/// derived from the standard (2/3, 1/3) promise.
pub fn build_pcbs_gadget(v: &VerifierSpec, phi: f64) -> Result<PcbsInstance, PcbsError> {
    v.validate()?;
    if !(phi > 0.0 && phi < std::f64::consts::FRAC_PI_2) {
        return Err(PcbsError::BadAngle { phi });
    }
    let n = v.circuit.n_qubits;
    let marker = n;
    let guard = n + 1;
    let mut z = Circuit::new(n + 2);

    // G: flip D, then flip it back exactly in the canonical ancilla sector
    // (A, B) = (0^a, 0), so only non-canonical sectors keep the flip.
    let mut canonical_controls: Vec<(usize, u8)> =
        v.registers.a.iter().map(|&q| (q, 0u8)).collect();
    canonical_controls.push((v.registers.b, 0));
    z.push(Gate::X { q: guard });
    z.push(Gate::Mcx { target: guard, controls: canonical_controls });

    // R1: R(phi) = RY(2 phi) on the marker, controlled on A = 0^a.
    let a_controls: Vec<(usize, u8)> = v.registers.a.iter().map(|&q| (q, 0u8)).collect();
    z.push(Gate::Mcry { target: marker, controls: a_controls, theta: 2.0 * phi });

    // U
    for gate in &v.circuit.gates {
        z.push(gate.clone());
    }

    // R2: R(-phi) on the marker, controlled on B = 1.
    z.push(Gate::Mcry { target: marker, controls: vec![(v.registers.b, 1)], theta: -2.0 * phi });

    // U^dagger
    for gate in &v.circuit.invert().gates {
        z.push(gate.clone());
    }

    let thresholds = pcbs_thresholds(DEFAULT_COMPLETENESS, DEFAULT_SOUNDNESS, phi)?;
    Ok(PcbsInstance {
        circuit: z,
        phi,
        registers: v.registers.clone(),
        marker,
        guard,
        delta_yes: thresholds.delta_yes,
        delta_no: thresholds.delta_no,
        gap: thresholds.gap,
    })
}

impl PcbsInstance {
    /// The canonical basis state for witness `y`: witness bits in place,
    /// ancillas, output, marker and guard all zero.
    pub fn canonical_state(&self, y: &BitString) -> BitString {
        assert_eq!(y.len(), self.registers.y.len(), "witness length mismatch");
        let mut z = BitString::zeros(self.circuit.n_qubits);
        for (i, &q) in self.registers.y.iter().enumerate() {
            z.set_bit(q, y.bit(i));
        }
        z
    }

    /// True when the ancilla/output sector of `z` is canonical, i.e.
    /// `(A, B) = (0^a, 0)`. Only such states can carry a nonzero diagonal.
    pub fn has_canonical_ancillas(&self, z: &BitString) -> bool {
        self.registers.a.iter().all(|&q| z.bit(q) == 0) && z.bit(self.registers.b) == 0
    }
}

/// The complex diagonal element `<z|Z|z>` computed by the dense oracle.
pub fn diagonal_element(z_circuit: &Circuit, z: &BitString) -> Result<C64, SimError> {
    let sv = simulate(z_circuit, z)?;
    Ok(sv.amplitude(z))
}

/// Magnitude of the diagonal element, the quantity the peakedness check
/// thresholds against.
pub fn diagonal_overlap(z_circuit: &Circuit, z: &BitString) -> Result<f64, SimError> {
    Ok(diagonal_element(z_circuit, z)?.norm())
}

/// Decision of the brute-force peakedness check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Yes,
    No,
    Unknown,
}

/// Outcome of enumerating canonical witnesses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecideReport {
    pub decision: Decision,
    pub best_witness: BitString,
    pub best_overlap: f64,
    pub enumerated: usize,
    pub exhausted: bool,
}

/// Numerical slack for threshold comparisons against oracle overlaps.
const DECIDE_TOL: f64 = 1e-9;

/// Brute-force the canonical witnesses (up to `limit` of them): YES as soon
/// as one overlap reaches `delta_yes`; NO when the whole witness space was
/// enumerated and every overlap stayed below `delta_no`; UNKNOWN otherwise.
pub fn pcbs_decide(
    inst: &PcbsInstance,
    delta_yes: f64,
    delta_no: f64,
    limit: usize,
) -> Result<DecideReport, PcbsError> {
    assert!(limit >= 1, "enumeration limit must be at least 1");
    let n_witness = inst.registers.y.len();
    let space = 1usize << n_witness;
    let to_enumerate = space.min(limit);
    let mut best_overlap = -1.0f64;
    let mut best_witness = BitString::zeros(n_witness);
    let mut all_below_no = true;
    for index in 0..to_enumerate {
        let y = BitString::from_index(index, n_witness);
        let z = inst.canonical_state(&y);
        let overlap = diagonal_overlap(&inst.circuit, &z)?;
        if overlap > best_overlap {
            best_overlap = overlap;
            best_witness = y.clone();
        }
        if overlap >= delta_yes - DECIDE_TOL {
            return Ok(DecideReport {
                decision: Decision::Yes,
                best_witness: y,
                best_overlap: overlap,
                enumerated: index + 1,
                exhausted: index + 1 == space,
            });
        }
        if overlap >= delta_no - DECIDE_TOL {
            all_below_no = false;
        }
    }
    let exhausted = to_enumerate == space;
    let decision =
        if exhausted && all_below_no { Decision::No } else { Decision::Unknown };
    Ok(DecideReport { decision, best_witness, best_overlap, enumerated: to_enumerate, exhausted })
}
