//! Peephole cancellation of adjacent gate/adjoint pairs.
//!
//! This is the "transpiler attack" a solver would run first: repeatedly
//! delete pairs of mutually inverse gates that act on the same qubits and are
//! adjacent up to commuting intermediaries. Only one commutation family is
//! used when scanning for a partner: computational-basis diagonal gates
//! (`RZ`, `RZZ`) commute with each other, so they never block one another.
//!
//! An unobfuscated `U` followed by its inverse collapses to nothing; the
//! interesting question is what fraction of two-qubit gates survives after
//! the obfuscation passes.

use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Gate};

/// Angle tolerance when matching a rotation against its inverse.
const CANCEL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimplifyReport {
    pub original_gates: usize,
    pub remaining_gates: usize,
    pub original_two_qubit: usize,
    pub remaining_two_qubit: usize,
    pub removed_pairs: usize,
    /// `remaining_two_qubit / original_two_qubit`; 1.0 when there were none.
    pub surviving_two_qubit_fraction: f64,
}

fn same_support(a: &Gate, b: &Gate) -> bool {
    let mut qa = a.qubits();
    let mut qb = b.qubits();
    qa.sort_unstable();
    qb.sort_unstable();
    qa == qb
}

fn supports_overlap(a: &Gate, b: &Gate) -> bool {
    let qa = a.qubits();
    b.qubits().iter().any(|q| qa.contains(q))
}

fn angles_cancel(x: f64, y: f64) -> bool {
    (x + y).abs() <= CANCEL_TOL
}

/// Is `b` the adjoint of `a` (acting on the same qubits)?
fn is_adjoint_pair(a: &Gate, b: &Gate) -> bool {
    match (a, b) {
        (Gate::Rx { q: qa, theta: ta }, Gate::Rx { q: qb, theta: tb })
        | (Gate::Rz { q: qa, theta: ta }, Gate::Rz { q: qb, theta: tb }) => {
            qa == qb && angles_cancel(*ta, *tb)
        }
        (Gate::Rzz { theta: ta, .. }, Gate::Rzz { theta: tb, .. }) => {
            same_support(a, b) && angles_cancel(*ta, *tb)
        }
        (Gate::Swap { .. }, Gate::Swap { .. }) => same_support(a, b),
        (Gate::X { q: qa }, Gate::X { q: qb }) => qa == qb,
        (
            Gate::Mcry { target: t1, controls: c1, theta: ta },
            Gate::Mcry { target: t2, controls: c2, theta: tb },
        ) => {
            let mut s1 = c1.clone();
            let mut s2 = c2.clone();
            s1.sort_unstable();
            s2.sort_unstable();
            t1 == t2 && s1 == s2 && angles_cancel(*ta, *tb)
        }
        (Gate::Mcx { target: t1, controls: c1 }, Gate::Mcx { target: t2, controls: c2 }) => {
            let mut s1 = c1.clone();
            let mut s2 = c2.clone();
            s1.sort_unstable();
            s2.sort_unstable();
            t1 == t2 && s1 == s2
        }
        _ => false,
    }
}

/// Remove gate/adjoint pairs until no more cancel.
pub fn cancel_inverse_pairs(c: &Circuit) -> (Circuit, SimplifyReport) {
    let mut alive: Vec<Option<Gate>> = c.gates.iter().cloned().map(Some).collect();
    let mut removed_pairs = 0;

    loop {
        let mut changed = false;
        'outer: for i in 0..alive.len() {
            let Some(gi) = alive[i].clone() else { continue };
            for j in (i + 1)..alive.len() {
                let Some(gj) = alive[j].clone() else { continue };
                if !supports_overlap(&gi, &gj) {
                    continue;
                }
                if is_adjoint_pair(&gi, &gj) {
                    alive[i] = None;
                    alive[j] = None;
                    removed_pairs += 1;
                    changed = true;
                    continue 'outer;
                }
                if gi.is_diagonal() && gj.is_diagonal() {
                    // diagonal gates commute; keep scanning for a partner
                    continue;
                }
                // blocked by a non-commuting gate on a shared qubit
                continue 'outer;
            }
        }
        if !changed {
            break;
        }
    }

    let gates: Vec<Gate> = alive.into_iter().flatten().collect();
    let out = Circuit {
        n_qubits: c.n_qubits,
        gates,
        meta: c.meta.clone(),
    };
    let original_two_qubit = c.two_qubit_gate_count();
    let remaining_two_qubit = out.two_qubit_gate_count();
    let report = SimplifyReport {
        original_gates: c.len(),
        remaining_gates: out.len(),
        original_two_qubit,
        remaining_two_qubit,
        removed_pairs,
        surviving_two_qubit_fraction: if original_two_qubit == 0 {
            1.0
        } else {
            remaining_two_qubit as f64 / original_two_qubit as f64
        },
    };
    (out, report)
}
