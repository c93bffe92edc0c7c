//! Gate-list circuit IR and its JSON serialization.
//!
//! A [`Circuit`] is an ordered list of gates applied left to right: the first
//! gate in the list acts on the input state first. The gate set is fixed:
//! `RX`, `RZ`, `RZZ`, `SWAP`, `X`, plus multi-controlled `MCRY`/`MCX` with
//! per-control polarities (a polarity-0 control fires on `|0>`).
//!
//! The on-disk format is versioned JSON:
//!
//! ```json
//! {"version":1,"n_qubits":4,
//!  "gates":[{"g":"RZZ","q":[0,2],"theta":0.25},
//!           {"g":"MCX","q":[3],"ctrl":[[0,0],[1,1]]}],
//!  "meta":{}}
//! ```
//!
//! Angles are `f64` radians and round-trip bit-exactly through serialization.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("parse error at line {line}, column {column} (byte {offset}): {message}")]
    Parse {
        line: usize,
        column: usize,
        offset: usize,
        message: String,
    },
    #[error("unsupported format version {found} (expected 1)")]
    Version { found: u64 },
    #[error("unknown gate name {name:?} at gate {index}")]
    UnknownGate { index: usize, name: String },
    #[error("gate {index}: expected {expected} target qubit(s), found {found}")]
    Arity {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("gate {index}: qubit {qubit} out of range for {n} qubit(s)")]
    QubitOutOfRange {
        index: usize,
        qubit: usize,
        n: usize,
    },
    #[error("gate {index}: qubit {qubit} appears more than once")]
    DuplicateQubit { index: usize, qubit: usize },
    #[error("gate {index}: control polarity {found} is not 0 or 1")]
    BadPolarity { index: usize, found: u8 },
    #[error("gate {index}: angle is not finite")]
    NonFiniteAngle { index: usize },
    #[error("gate {index}: {name} requires an angle")]
    MissingAngle { index: usize, name: String },
    #[error("gate {index}: {name} does not take field {field:?}")]
    UnexpectedField {
        index: usize,
        name: String,
        field: String,
    },
    #[error("cannot compose circuits on {left} and {right} qubits")]
    ComposeMismatch { left: usize, right: usize },
    #[error("permutation has length {len}, circuit has {n} qubits")]
    PermutationMismatch { len: usize, n: usize },
    #[error("not a permutation: value {value} repeats or is out of range")]
    NotAPermutation { value: usize },
}

/// One gate. Angles are radians; `controls` lists `(qubit, polarity)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    Rx { q: usize, theta: f64 },
    Rz { q: usize, theta: f64 },
    Rzz { a: usize, b: usize, theta: f64 },
    Swap { a: usize, b: usize },
    X { q: usize },
    Mcry { target: usize, controls: Vec<(usize, u8)>, theta: f64 },
    Mcx { target: usize, controls: Vec<(usize, u8)> },
}

impl Gate {
    pub fn name(&self) -> &'static str {
        match self {
            Gate::Rx { .. } => "RX",
            Gate::Rz { .. } => "RZ",
            Gate::Rzz { .. } => "RZZ",
            Gate::Swap { .. } => "SWAP",
            Gate::X { .. } => "X",
            Gate::Mcry { .. } => "MCRY",
            Gate::Mcx { .. } => "MCX",
        }
    }

    /// Every qubit the gate touches (targets first, then controls).
    pub fn qubits(&self) -> Vec<usize> {
        match self {
            Gate::Rx { q, .. } | Gate::Rz { q, .. } | Gate::X { q } => vec![*q],
            Gate::Rzz { a, b, .. } | Gate::Swap { a, b } => vec![*a, *b],
            Gate::Mcry { target, controls, .. } | Gate::Mcx { target, controls } => {
                let mut qs = vec![*target];
                qs.extend(controls.iter().map(|&(c, _)| c));
                qs
            }
        }
    }

    /// Rotation angle, if the gate has one.
    pub fn theta(&self) -> Option<f64> {
        match self {
            Gate::Rx { theta, .. }
            | Gate::Rz { theta, .. }
            | Gate::Rzz { theta, .. }
            | Gate::Mcry { theta, .. } => Some(*theta),
            _ => None,
        }
    }

    /// Mutable access to the rotation angle, if the gate has one.
    pub fn theta_mut(&mut self) -> Option<&mut f64> {
        match self {
            Gate::Rx { theta, .. }
            | Gate::Rz { theta, .. }
            | Gate::Rzz { theta, .. }
            | Gate::Mcry { theta, .. } => Some(theta),
            _ => None,
        }
    }

    /// The adjoint gate: rotations negate their angle, the rest are involutions.
    pub fn adjoint(&self) -> Gate {
        match self.clone() {
            Gate::Rx { q, theta } => Gate::Rx { q, theta: -theta },
            Gate::Rz { q, theta } => Gate::Rz { q, theta: -theta },
            Gate::Rzz { a, b, theta } => Gate::Rzz { a, b, theta: -theta },
            g @ (Gate::Swap { .. } | Gate::X { .. } | Gate::Mcx { .. }) => g,
            Gate::Mcry { target, controls, theta } => Gate::Mcry {
                target,
                controls,
                theta: -theta,
            },
        }
    }

    /// Relabel every qubit through `f`.
    pub fn relabel(&self, f: impl Fn(usize) -> usize) -> Gate {
        match self.clone() {
            Gate::Rx { q, theta } => Gate::Rx { q: f(q), theta },
            Gate::Rz { q, theta } => Gate::Rz { q: f(q), theta },
            Gate::Rzz { a, b, theta } => Gate::Rzz { a: f(a), b: f(b), theta },
            Gate::Swap { a, b } => Gate::Swap { a: f(a), b: f(b) },
            Gate::X { q } => Gate::X { q: f(q) },
            Gate::Mcry { target, controls, theta } => Gate::Mcry {
                target: f(target),
                controls: controls.into_iter().map(|(c, p)| (f(c), p)).collect(),
                theta,
            },
            Gate::Mcx { target, controls } => Gate::Mcx {
                target: f(target),
                controls: controls.into_iter().map(|(c, p)| (f(c), p)).collect(),
            },
        }
    }

    /// True for gates diagonal in the computational basis.
    pub fn is_diagonal(&self) -> bool {
        matches!(self, Gate::Rz { .. } | Gate::Rzz { .. })
    }
}

/// An ordered gate list on `n_qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub n_qubits: usize,
    pub gates: Vec<Gate>,
    pub meta: BTreeMap<String, String>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Circuit {
            n_qubits,
            gates: Vec::new(),
            meta: BTreeMap::new(),
        }
    }

    pub fn with_gates(n_qubits: usize, gates: Vec<Gate>) -> Result<Self, CircuitError> {
        let c = Circuit {
            n_qubits,
            gates,
            meta: BTreeMap::new(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn push(&mut self, gate: Gate) {
        self.gates.push(gate);
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Gates touching two or more distinct qubits.
    pub fn two_qubit_gate_count(&self) -> usize {
        self.gates.iter().filter(|g| g.qubits().len() >= 2).count()
    }

    /// Number of RZZ gates (the entangling workhorse of generated circuits).
    pub fn rzz_count(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, Gate::Rzz { .. })).count()
    }

    /// Rotation angles in gate order (parameterized gates only).
    pub fn angles(&self) -> Vec<f64> {
        self.gates.iter().filter_map(|g| g.theta()).collect()
    }

    /// Check qubit bounds, distinctness, polarities and angle finiteness.
    pub fn validate(&self) -> Result<(), CircuitError> {
        for (index, gate) in self.gates.iter().enumerate() {
            let qs = gate.qubits();
            let mut seen = vec![false; self.n_qubits];
            for &q in &qs {
                if q >= self.n_qubits {
                    return Err(CircuitError::QubitOutOfRange {
                        index,
                        qubit: q,
                        n: self.n_qubits,
                    });
                }
                if seen[q] {
                    return Err(CircuitError::DuplicateQubit { index, qubit: q });
                }
                seen[q] = true;
            }
            if let Some(t) = gate.theta() {
                if !t.is_finite() {
                    return Err(CircuitError::NonFiniteAngle { index });
                }
            }
            if let Gate::Mcry { controls, .. } | Gate::Mcx { controls, .. } = gate {
                for &(_, p) in controls {
                    if p > 1 {
                        return Err(CircuitError::BadPolarity { index, found: p });
                    }
                }
            }
        }
        Ok(())
    }

    /// Left-to-right composition: `self` acts first, then `other`.
    pub fn then(&self, other: &Circuit) -> Result<Circuit, CircuitError> {
        if self.n_qubits != other.n_qubits {
            return Err(CircuitError::ComposeMismatch {
                left: self.n_qubits,
                right: other.n_qubits,
            });
        }
        let mut gates = self.gates.clone();
        gates.extend(other.gates.iter().cloned());
        Ok(Circuit {
            n_qubits: self.n_qubits,
            gates,
            meta: BTreeMap::new(),
        })
    }

    /// The adjoint circuit: reversed gate order, each gate adjointed.
    pub fn invert(&self) -> Circuit {
        Circuit {
            n_qubits: self.n_qubits,
            gates: self.gates.iter().rev().map(Gate::adjoint).collect(),
            meta: BTreeMap::new(),
        }
    }

    /// Relabel qubits: qubit `q` becomes `perm.forward()[q]`.
    pub fn apply_permutation(&self, perm: &QubitPermutation) -> Result<Circuit, CircuitError> {
        if perm.len() != self.n_qubits {
            return Err(CircuitError::PermutationMismatch {
                len: perm.len(),
                n: self.n_qubits,
            });
        }
        Ok(Circuit {
            n_qubits: self.n_qubits,
            gates: self
                .gates
                .iter()
                .map(|g| g.relabel(|q| perm.forward()[q]))
                .collect(),
            meta: self.meta.clone(),
        })
    }

    /// Compact canonical JSON (used for hashing and on-disk storage).
    pub fn to_json(&self) -> String {
        serde_json::to_string(&CircuitRepr::from(self)).expect("circuit serialization")
    }

    /// Human-oriented pretty JSON.
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&CircuitRepr::from(self)).expect("circuit serialization")
    }

    /// Parse and validate the versioned JSON form.
    pub fn from_json(text: &str) -> Result<Circuit, CircuitError> {
        let repr: CircuitRepr = serde_json::from_str(text).map_err(|e| {
            let (line, column) = (e.line(), e.column());
            CircuitError::Parse {
                line,
                column,
                offset: byte_offset(text, line, column),
                message: e.to_string(),
            }
        })?;
        repr.into_circuit()
    }
}

/// Convert serde_json's 1-based line/column into a byte offset.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in text.split('\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1).min(l.len());
        }
        offset += l.len() + 1;
    }
    text.len()
}

/// A relabeling of qubits; `forward()[old] == new`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QubitPermutation(Vec<usize>);

impl QubitPermutation {
    pub fn identity(n: usize) -> Self {
        QubitPermutation((0..n).collect())
    }

    pub fn from_forward(forward: Vec<usize>) -> Result<Self, CircuitError> {
        let n = forward.len();
        let mut seen = vec![false; n];
        for &v in &forward {
            if v >= n || seen[v] {
                return Err(CircuitError::NotAPermutation { value: v });
            }
            seen[v] = true;
        }
        Ok(QubitPermutation(forward))
    }

    pub fn forward(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn inverse(&self) -> QubitPermutation {
        let mut inv = vec![0; self.0.len()];
        for (old, &new) in self.0.iter().enumerate() {
            inv[new] = old;
        }
        QubitPermutation(inv)
    }
}

// ---------------------------------------------------------------------------
// JSON representation
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct GateRepr {
    g: String,
    q: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ctrl: Option<Vec<(usize, u8)>>,
}

#[derive(Serialize, Deserialize)]
struct CircuitRepr {
    version: u64,
    n_qubits: usize,
    gates: Vec<GateRepr>,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

impl From<&Circuit> for CircuitRepr {
    fn from(c: &Circuit) -> Self {
        let gates = c
            .gates
            .iter()
            .map(|g| {
                let (q, ctrl) = match g {
                    Gate::Mcry { target, controls, .. } | Gate::Mcx { target, controls } => {
                        (vec![*target], Some(controls.clone()))
                    }
                    _ => (g.qubits(), None),
                };
                GateRepr {
                    g: g.name().to_string(),
                    q,
                    theta: g.theta(),
                    ctrl,
                }
            })
            .collect();
        CircuitRepr {
            version: 1,
            n_qubits: c.n_qubits,
            gates,
            meta: c.meta.clone(),
        }
    }
}

impl CircuitRepr {
    fn into_circuit(self) -> Result<Circuit, CircuitError> {
        if self.version != 1 {
            return Err(CircuitError::Version { found: self.version });
        }
        let mut gates = Vec::with_capacity(self.gates.len());
        for (index, gr) in self.gates.into_iter().enumerate() {
            let arity = |expected: usize| -> Result<(), CircuitError> {
                if gr.q.len() != expected {
                    Err(CircuitError::Arity {
                        index,
                        expected,
                        found: gr.q.len(),
                    })
                } else {
                    Ok(())
                }
            };
            let need_theta = |name: &str| -> Result<f64, CircuitError> {
                gr.theta.ok_or_else(|| CircuitError::MissingAngle {
                    index,
                    name: name.to_string(),
                })
            };
            let no_ctrl = |name: &str| -> Result<(), CircuitError> {
                if gr.ctrl.is_some() {
                    Err(CircuitError::UnexpectedField {
                        index,
                        name: name.to_string(),
                        field: "ctrl".to_string(),
                    })
                } else {
                    Ok(())
                }
            };
            let gate = match gr.g.as_str() {
                "RX" => {
                    arity(1)?;
                    no_ctrl("RX")?;
                    Gate::Rx { q: gr.q[0], theta: need_theta("RX")? }
                }
                "RZ" => {
                    arity(1)?;
                    no_ctrl("RZ")?;
                    Gate::Rz { q: gr.q[0], theta: need_theta("RZ")? }
                }
                "RZZ" => {
                    arity(2)?;
                    no_ctrl("RZZ")?;
                    Gate::Rzz { a: gr.q[0], b: gr.q[1], theta: need_theta("RZZ")? }
                }
                "SWAP" => {
                    arity(2)?;
                    no_ctrl("SWAP")?;
                    if gr.theta.is_some() {
                        return Err(CircuitError::UnexpectedField {
                            index,
                            name: "SWAP".to_string(),
                            field: "theta".to_string(),
                        });
                    }
                    Gate::Swap { a: gr.q[0], b: gr.q[1] }
                }
                "X" => {
                    arity(1)?;
                    no_ctrl("X")?;
                    if gr.theta.is_some() {
                        return Err(CircuitError::UnexpectedField {
                            index,
                            name: "X".to_string(),
                            field: "theta".to_string(),
                        });
                    }
                    Gate::X { q: gr.q[0] }
                }
                "MCRY" => {
                    arity(1)?;
                    Gate::Mcry {
                        target: gr.q[0],
                        controls: gr.ctrl.unwrap_or_default(),
                        theta: need_theta("MCRY")?,
                    }
                }
                "MCX" => {
                    arity(1)?;
                    if gr.theta.is_some() {
                        return Err(CircuitError::UnexpectedField {
                            index,
                            name: "MCX".to_string(),
                            field: "theta".to_string(),
                        });
                    }
                    Gate::Mcx {
                        target: gr.q[0],
                        controls: gr.ctrl.unwrap_or_default(),
                    }
                }
                other => {
                    return Err(CircuitError::UnknownGate {
                        index,
                        name: other.to_string(),
                    })
                }
            };
            gates.push(gate);
        }
        let c = Circuit {
            n_qubits: self.n_qubits,
            gates,
            meta: self.meta,
        };
        c.validate()?;
        Ok(c)
    }
}
