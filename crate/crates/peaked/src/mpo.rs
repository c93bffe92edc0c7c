//! Middle-operator structural attack.
//!
//! An operator on the qubit chain is stored as a vectorized chain with
//! physical dimension 4 (site index `s = out*2 + in`). Starting from the
//! identity at a chosen gate cut, each step multiplies the next gate after
//! the cut on the output side and the next gate before the cut on the input
//! side. For a pristine `U > U^dag` block cut at its midpoint every step is
//! a conjugation of the identity, so all bonds stay at 1; obfuscation that
//! mixes the halves shows up as bond growth.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::attack::bits_from_z;
use crate::bits::BitString;
use crate::circuit::{Circuit, Gate};
use crate::mps::{gate_1q_matrix, gate_2q_matrix, Chain, Mps, MpsError, MpsResult};
use crate::tensor::{Tensor3, TruncationPolicy};

/// Numerically-zero singular values are dropped so that exactly-identity
/// operators collapse back to bond 1 after each conjugation step.
pub const MPO_CUTOFF: f64 = 1e-12;

/// Vectorized operator chain.
#[derive(Debug, Clone)]
pub struct Mpo {
    pub(crate) chain: Chain,
}

impl Mpo {
    /// Identity operator: every site holds the vectorized 2x2 identity.
    pub fn identity(n: usize) -> Self {
        let site = [C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
        Mpo { chain: Chain::product_state(n, &site) }
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.chain.bond_dims()
    }

    pub fn max_bond(&self) -> usize {
        self.chain.max_bond()
    }

    pub fn discarded_weight(&self) -> f64 {
        self.chain.discarded_weight
    }

    /// Left-multiply by a gate (`M <- g * M`), acting on the output legs.
    pub fn apply_output(&mut self, gate: &Gate, policy: &TruncationPolicy) -> MpsResult<()> {
        self.apply_side(gate, policy, true)
    }

    /// Right-multiply by a gate (`M <- M * g`), acting on the input legs.
    pub fn apply_input(&mut self, gate: &Gate, policy: &TruncationPolicy) -> MpsResult<()> {
        self.apply_side(gate, policy, false)
    }

    fn apply_side(&mut self, gate: &Gate, policy: &TruncationPolicy, output: bool) -> MpsResult<()> {
        match gate {
            Gate::Rx { q, .. } | Gate::Rz { q, .. } | Gate::X { q } => {
                let g = gate_1q_matrix(gate);
                let op = if output { out_op_1(&g) } else { in_op_1(&g) };
                self.chain.apply_1site(*q, &op);
                Ok(())
            }
            Gate::Rzz { a, b, .. } | Gate::Swap { a, b } => {
                let (lo, hi) = (*a.min(b), *a.max(b));
                let g = gate_2q_matrix(gate, lo, hi);
                let op = if output { out_op_2(&g) } else { in_op_2(&g) };
                self.chain.apply_2site_routed(lo, hi, &op, &site_swap4(), policy)
            }
            Gate::Mcry { .. } | Gate::Mcx { .. } => {
                Err(MpsError::UnsupportedGate(gate.name().to_string()))
            }
        }
    }

    /// Contract the input legs with `|0^N>`, leaving an (unnormalized)
    /// state chain.
    pub fn apply_to_zero(&self) -> Mps {
        let tensors: Vec<Tensor3> = self
            .chain
            .tensors
            .iter()
            .map(|w| {
                let mut t = Tensor3::zeros(w.dl, 2, w.dr);
                for l in 0..w.dl {
                    for o in 0..2 {
                        for r in 0..w.dr {
                            // in-leg fixed to 0: site index s = o*2 + 0
                            *t.at_mut(l, o, r) = w.at(l, o * 2, r);
                        }
                    }
                }
                t
            })
            .collect();
        Mps {
            chain: Chain {
                n: self.chain.n,
                d: 2,
                tensors,
                center: self.chain.center,
                discarded_weight: self.chain.discarded_weight,
                max_bond_seen: self.chain.max_bond_seen,
            },
        }
    }

    /// Dense matrix of the operator (small `n` only; `4^n` entries).
    pub fn to_matrix(&self) -> DMatrix<C64> {
        let flat = self.chain.contract_dense();
        let dim = 1usize << self.chain.n;
        // configuration index interleaves (out, in) per site, out major
        DMatrix::from_fn(dim, dim, |row, col| {
            let mut idx = 0usize;
            for site in 0..self.chain.n {
                let o = (row >> (self.chain.n - 1 - site)) & 1;
                let i = (col >> (self.chain.n - 1 - site)) & 1;
                idx = idx * 4 + (o * 2 + i);
            }
            flat[idx]
        })
    }
}

// 4x4 / 16x16 doubled-space operators; site index s = out*2 + in.

fn out_op_1(g: &DMatrix<C64>) -> DMatrix<C64> {
    g.kronecker(&DMatrix::identity(2, 2))
}

fn in_op_1(g: &DMatrix<C64>) -> DMatrix<C64> {
    DMatrix::identity(2, 2).kronecker(&g.transpose())
}

fn out_op_2(g: &DMatrix<C64>) -> DMatrix<C64> {
    DMatrix::from_fn(16, 16, |row, col| {
        let (s1n, s2n) = (row / 4, row % 4);
        let (s1, s2) = (col / 4, col % 4);
        let (o1n, i1n) = (s1n / 2, s1n % 2);
        let (o2n, i2n) = (s2n / 2, s2n % 2);
        let (o1, i1) = (s1 / 2, s1 % 2);
        let (o2, i2) = (s2 / 2, s2 % 2);
        if i1n == i1 && i2n == i2 {
            g[(o1n * 2 + o2n, o1 * 2 + o2)]
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

fn in_op_2(g: &DMatrix<C64>) -> DMatrix<C64> {
    DMatrix::from_fn(16, 16, |row, col| {
        let (s1n, s2n) = (row / 4, row % 4);
        let (s1, s2) = (col / 4, col % 4);
        let (o1n, i1n) = (s1n / 2, s1n % 2);
        let (o2n, i2n) = (s2n / 2, s2n % 2);
        let (o1, i1) = (s1 / 2, s1 % 2);
        let (o2, i2) = (s2 / 2, s2 % 2);
        if o1n == o1 && o2n == o2 {
            g[(i1 * 2 + i2, i1n * 2 + i2n)]
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Full-site swap (both legs) for routing.
fn site_swap4() -> DMatrix<C64> {
    DMatrix::from_fn(16, 16, |row, col| {
        let (s1n, s2n) = (row / 4, row % 4);
        let (s1, s2) = (col / 4, col % 4);
        if s1n == s2 && s2n == s1 {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Report of one middle-operator run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MpoReport {
    pub cut: usize,
    pub chi_max: usize,
    /// Maximal bond dimension after each two-sided step.
    pub bond_profile: Vec<usize>,
    pub final_max_bond: usize,
    pub discarded_weight: f64,
    /// True when any truncation discarded weight beyond numerical noise.
    pub lossy: bool,
    /// Sign-rule marginals of the assembled operator applied to `|0^N>`.
    pub marginals: Vec<f64>,
    pub candidate: BitString,
}

/// Grow an identity operator from gate index `cut` outwards: step `j`
/// multiplies gate `cut+j-1` (0-based) on the output side and gate `cut-j`
/// on the input side, compressing to `chi_max` after each step. The
/// assembled operator equals the whole circuit, so the report's marginals
/// target the same distribution as a direct simulation.
pub fn middle_mpo_attack(c: &Circuit, cut: usize, chi_max: usize) -> MpsResult<MpoReport> {
    assert!(cut <= c.len(), "cut {cut} beyond gate count {}", c.len());
    let policy = TruncationPolicy { chi_max: chi_max.max(1), cutoff: MPO_CUTOFF };
    let mut m = Mpo::identity(c.n_qubits);
    let steps = cut.max(c.len() - cut);
    let mut bond_profile = Vec::with_capacity(steps);
    for j in 1..=steps {
        if cut + j <= c.len() {
            m.apply_output(&c.gates[cut + j - 1], &policy)?;
        }
        if j <= cut {
            m.apply_input(&c.gates[cut - j], &policy)?;
        }
        bond_profile.push(m.max_bond());
    }
    m.chain.check_finite()?;

    let state = m.apply_to_zero();
    let marginals = state.z_expectations();
    let candidate = bits_from_z(&marginals);
    Ok(MpoReport {
        cut,
        chi_max,
        final_max_bond: m.max_bond(),
        discarded_weight: m.discarded_weight(),
        lossy: m.discarded_weight() > 1e-10,
        bond_profile,
        marginals,
        candidate,
    })
}
