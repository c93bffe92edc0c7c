//! Bond-truncated matrix-product simulation and the bond-dimension attack.
//!
//! A [`Chain`] is a 1D tensor network with a runtime physical dimension: 2
//! for states, 4 for vectorized operators (see the middle-operator attack).
//! Gates on non-adjacent sites are routed with temporary swap chains that
//! are undone immediately, so the logical site order never changes.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::{bits_from_z, recovery_fraction};
use crate::bits::BitString;
use crate::circuit::{Circuit, Gate};
use crate::graph::{rcm_order, AdjacencyGraph};
use crate::patch::gates_unitary;
use crate::statevector::{StateVector, MAX_DENSE_QUBITS};
use crate::tensor::{svd_truncate, thin_lq, thin_qr, Tensor3, TensorError, TruncationPolicy};

#[derive(Debug, Error)]
pub enum MpsError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("gate {0} is not supported by the chain simulator")]
    UnsupportedGate(String),
    #[error("{n} sites exceed the dense conversion limit of {max}")]
    TooLarge { n: usize, max: usize },
    #[error("bitstring length {got} does not match {want} sites")]
    LengthMismatch { got: usize, want: usize },
}

pub type MpsResult<T> = Result<T, MpsError>;

// ---------------------------------------------------------------------------
// Chain engine
// ---------------------------------------------------------------------------

/// Center-canonical chain of rank-3 tensors with physical dimension `d`.
#[derive(Debug, Clone)]
pub(crate) struct Chain {
    pub n: usize,
    pub d: usize,
    pub tensors: Vec<Tensor3>,
    pub center: usize,
    /// Sum of the squared-weight fractions discarded by every truncation.
    pub discarded_weight: f64,
    /// Largest bond dimension reached at any point of the evolution.
    pub max_bond_seen: usize,
}

impl Chain {
    /// Product state `|v v ... v>` for a unit vector `v` of length `d`.
    pub fn product_state(n: usize, site: &[C64]) -> Self {
        let d = site.len();
        let tensors = (0..n)
            .map(|_| {
                let mut t = Tensor3::zeros(1, d, 1);
                for (p, amp) in site.iter().enumerate() {
                    *t.at_mut(0, p, 0) = *amp;
                }
                t
            })
            .collect();
        Chain { n, d, tensors, center: 0, discarded_weight: 0.0, max_bond_seen: 1 }
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        // interior bonds only: bond i sits between sites i and i+1
        (0..self.n.saturating_sub(1)).map(|i| self.tensors[i].dr).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn move_center_to(&mut self, target: usize) {
        while self.center < target {
            let c = self.center;
            let (q, r) = thin_qr(&self.tensors[c].as_matrix_left());
            self.tensors[c] = Tensor3::from_matrix_left(&q, self.tensors[c].dl, self.d);
            let next = &self.tensors[c + 1];
            let m = r * next.as_matrix_right();
            self.tensors[c + 1] = Tensor3::from_matrix_right(&m, self.d, next.dr);
            self.center += 1;
        }
        while self.center > target {
            let c = self.center;
            let (l, q) = thin_lq(&self.tensors[c].as_matrix_right());
            self.tensors[c] = Tensor3::from_matrix_right(&q, self.d, self.tensors[c].dr);
            let prev = &self.tensors[c - 1];
            let m = prev.as_matrix_left() * l;
            self.tensors[c - 1] = Tensor3::from_matrix_left(&m, prev.dl, self.d);
            self.center -= 1;
        }
    }

    /// Apply a `d x d` operator to a single site (no bond change).
    pub fn apply_1site(&mut self, i: usize, op: &DMatrix<C64>) {
        let t = &self.tensors[i];
        let mut out = Tensor3::zeros(t.dl, self.d, t.dr);
        for l in 0..t.dl {
            for r in 0..t.dr {
                for p_new in 0..self.d {
                    let mut acc = C64::new(0.0, 0.0);
                    for p_old in 0..self.d {
                        acc += op[(p_new, p_old)] * t.at(l, p_old, r);
                    }
                    *out.at_mut(l, p_new, r) = acc;
                }
            }
        }
        self.tensors[i] = out;
    }

    /// Apply a `d^2 x d^2` operator to adjacent sites `(i, i+1)` with SVD
    /// truncation; the center ends at `i+1`. Operator indices group as
    /// `(p_i, p_{i+1})` with `p_i` major.
    pub fn apply_2site(
        &mut self,
        i: usize,
        op: &DMatrix<C64>,
        policy: &TruncationPolicy,
    ) -> MpsResult<()> {
        self.move_center_to(i);
        let d = self.d;
        let (a, b) = (&self.tensors[i], &self.tensors[i + 1]);
        let (dl, dr) = (a.dl, b.dr);
        let theta = a.as_matrix_left() * b.as_matrix_right();

        let mut rotated = DMatrix::from_element(dl * d, d * dr, C64::new(0.0, 0.0));
        for l in 0..dl {
            for r in 0..dr {
                for p1 in 0..d {
                    for p2 in 0..d {
                        let mut acc = C64::new(0.0, 0.0);
                        for q1 in 0..d {
                            for q2 in 0..d {
                                acc += op[(p1 * d + p2, q1 * d + q2)]
                                    * theta[(l * d + q1, q2 * dr + r)];
                            }
                        }
                        rotated[(l * d + p1, p2 * dr + r)] = acc;
                    }
                }
            }
        }

        let split = svd_truncate(&rotated, policy)?;
        let kept = split.s.len();
        self.discarded_weight += split.discarded_weight;
        self.max_bond_seen = self.max_bond_seen.max(kept);
        self.tensors[i] = Tensor3::from_matrix_left(&split.u, dl, d);
        let mut sv = split.vt;
        for (row, s) in split.s.iter().enumerate() {
            for col in 0..sv.ncols() {
                sv[(row, col)] *= *s;
            }
        }
        self.tensors[i + 1] = Tensor3::from_matrix_right(&sv, d, dr);
        self.center = i + 1;
        Ok(())
    }

    /// Apply a 2-site operator to arbitrary sites `a < b`, routing with
    /// temporary swap chains (there and back) when they are not adjacent.
    pub fn apply_2site_routed(
        &mut self,
        a: usize,
        b: usize,
        op: &DMatrix<C64>,
        swap_op: &DMatrix<C64>,
        policy: &TruncationPolicy,
    ) -> MpsResult<()> {
        debug_assert!(a < b);
        for j in ((a + 1)..b).rev() {
            self.apply_2site(j, swap_op, policy)?;
        }
        self.apply_2site(a, op, policy)?;
        for j in (a + 1)..b {
            self.apply_2site(j, swap_op, policy)?;
        }
        Ok(())
    }

    /// `<chain|prod_i diag_i|chain> / <chain|chain>` for per-site diagonal
    /// weights, evaluated gauge-independently via transfer matrices.
    pub fn site_expectations(&self, diag: &[f64]) -> Vec<f64> {
        debug_assert_eq!(diag.len(), self.d);
        let phys: Vec<Vec<DMatrix<C64>>> = self
            .tensors
            .iter()
            .map(|t| (0..self.d).map(|p| t.phys_slice(p)).collect())
            .collect();

        // E_i: environment of sites < i, rows = bra bond, cols = ket bond
        let mut left = Vec::with_capacity(self.n + 1);
        left.push(DMatrix::from_element(1, 1, C64::new(1.0, 0.0)));
        for slices in &phys {
            let prev = left.last().unwrap();
            let mut env = DMatrix::from_element(
                slices[0].ncols(),
                slices[0].ncols(),
                C64::new(0.0, 0.0),
            );
            for m in slices {
                env += m.adjoint() * prev * m;
            }
            left.push(env);
        }
        // F_i: environment of sites >= i, rows = ket bond, cols = bra bond
        let mut right = vec![DMatrix::from_element(1, 1, C64::new(1.0, 0.0)); self.n + 1];
        for i in (0..self.n).rev() {
            let next = right[i + 1].clone();
            let slices = &phys[i];
            let mut env =
                DMatrix::from_element(slices[0].nrows(), slices[0].nrows(), C64::new(0.0, 0.0));
            for m in slices {
                env += m * &next * m.adjoint();
            }
            right[i] = env;
        }

        (0..self.n)
            .map(|i| {
                let mut numer = C64::new(0.0, 0.0);
                let mut denom = C64::new(0.0, 0.0);
                for (p, m) in phys[i].iter().enumerate() {
                    let x = m.adjoint() * &left[i] * m;
                    let contracted = (&x * &right[i + 1]).trace();
                    numer += contracted * diag[p];
                    denom += contracted;
                }
                if denom.norm() > 0.0 {
                    (numer / denom).re
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Amplitude of one basis configuration (per-site physical indices).
    pub fn amplitude(&self, config: &[usize]) -> C64 {
        let mut v = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        for (t, &p) in self.tensors.iter().zip(config) {
            v *= t.phys_slice(p);
        }
        v[(0, 0)]
    }

    pub fn norm_sqr(&self) -> f64 {
        let mut env = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        for t in &self.tensors {
            let mut next = DMatrix::from_element(t.dr, t.dr, C64::new(0.0, 0.0));
            for p in 0..self.d {
                let m = t.phys_slice(p);
                next += m.adjoint() * &env * m;
            }
            env = next;
        }
        env[(0, 0)].re
    }

    /// Contract to a full vector over `d^n` configurations, site 0 as the
    /// most significant digit.
    pub fn contract_dense(&self) -> Vec<C64> {
        let mut acc: DMatrix<C64> = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        for t in &self.tensors {
            // acc: (configs x bond) -> (configs*d x bond')
            let rows = acc.nrows() * self.d;
            let mut next = DMatrix::from_element(rows, t.dr, C64::new(0.0, 0.0));
            for x in 0..acc.nrows() {
                for p in 0..self.d {
                    for r in 0..t.dr {
                        let mut v = C64::new(0.0, 0.0);
                        for m in 0..t.dl {
                            v += acc[(x, m)] * t.at(m, p, r);
                        }
                        next[(x * self.d + p, r)] = v;
                    }
                }
            }
            acc = next;
        }
        acc.column(0).iter().copied().collect()
    }

    pub fn check_finite(&self) -> MpsResult<()> {
        if self.tensors.iter().all(|t| t.is_finite()) {
            Ok(())
        } else {
            Err(MpsError::Tensor(TensorError::NonFinite))
        }
    }
}

// ---------------------------------------------------------------------------
// Matrix-product state
// ---------------------------------------------------------------------------

/// Bond-truncated quantum state on a chain of qubits.
#[derive(Debug, Clone)]
pub struct Mps {
    pub(crate) chain: Chain,
}

pub(crate) fn gate_1q_matrix(gate: &Gate) -> DMatrix<C64> {
    gates_unitary(1, &[gate.relabel(|_| 0)])
}

pub(crate) fn gate_2q_matrix(gate: &Gate, a: usize, b: usize) -> DMatrix<C64> {
    // site a holds the gate's first qubit and becomes local qubit 0 (index
    // major), matching the amplitude convention
    gates_unitary(2, &[gate.relabel(|q| if q == a { 0 } else if q == b { 1 } else { q })])
}

pub(crate) fn swap_matrix() -> DMatrix<C64> {
    gates_unitary(2, &[Gate::Swap { a: 0, b: 1 }])
}

impl Mps {
    pub fn zero_state(n: usize) -> Self {
        Mps { chain: Chain::product_state(n, &[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]) }
    }

    pub fn basis_state(bits: &BitString) -> Self {
        let mut m = Mps::zero_state(bits.len());
        let x = gates_unitary(1, &[Gate::X { q: 0 }]);
        for i in 0..bits.len() {
            if bits.bit(i) == 1 {
                m.chain.apply_1site(i, &x);
            }
        }
        m
    }

    pub fn n_qubits(&self) -> usize {
        self.chain.n
    }

    pub fn max_bond(&self) -> usize {
        self.chain.max_bond()
    }

    pub fn max_bond_seen(&self) -> usize {
        self.chain.max_bond_seen
    }

    pub fn discarded_weight(&self) -> f64 {
        self.chain.discarded_weight
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.chain.bond_dims()
    }

    pub fn apply_gate(&mut self, gate: &Gate, policy: &TruncationPolicy) -> MpsResult<()> {
        match gate {
            Gate::Rx { q, .. } | Gate::Rz { q, .. } | Gate::X { q } => {
                self.chain.apply_1site(*q, &gate_1q_matrix(gate));
                Ok(())
            }
            Gate::Rzz { a, b, .. } | Gate::Swap { a, b } => {
                let (lo, hi) = (*a.min(b), *a.max(b));
                let op = gate_2q_matrix(gate, lo, hi);
                self.chain.apply_2site_routed(lo, hi, &op, &swap_matrix(), policy)
            }
            Gate::Mcry { .. } | Gate::Mcx { .. } => {
                Err(MpsError::UnsupportedGate(gate.name().to_string()))
            }
        }
    }

    pub fn apply_circuit(&mut self, c: &Circuit, policy: &TruncationPolicy) -> MpsResult<()> {
        for gate in &c.gates {
            self.apply_gate(gate, policy)?;
        }
        self.chain.check_finite()
    }

    pub fn amplitude(&self, bits: &BitString) -> MpsResult<C64> {
        if bits.len() != self.chain.n {
            return Err(MpsError::LengthMismatch { got: bits.len(), want: self.chain.n });
        }
        let config: Vec<usize> = (0..bits.len()).map(|i| bits.bit(i) as usize).collect();
        Ok(self.chain.amplitude(&config))
    }

    pub fn z_expectations(&self) -> Vec<f64> {
        self.chain.site_expectations(&[1.0, -1.0])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.chain.norm_sqr()
    }

    pub fn to_statevector(&self) -> MpsResult<StateVector> {
        if self.chain.n > MAX_DENSE_QUBITS {
            return Err(MpsError::TooLarge { n: self.chain.n, max: MAX_DENSE_QUBITS });
        }
        let amps = self.chain.contract_dense();
        Ok(StateVector::from_amplitudes(self.chain.n, amps))
    }
}

/// Evolve `|0^N>` through the circuit under the truncation policy.
pub fn mps_simulate(c: &Circuit, policy: &TruncationPolicy) -> MpsResult<Mps> {
    let mut m = Mps::zero_state(c.n_qubits);
    m.apply_circuit(c, policy)?;
    Ok(m)
}

/// Per-site `<Z_i>` of a matrix-product state.
pub fn mps_marginals(m: &Mps) -> Vec<f64> {
    m.z_expectations()
}

// ---------------------------------------------------------------------------
// Bond-dimension attack
// ---------------------------------------------------------------------------

/// One evaluated bond-dimension point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChiPoint {
    pub chi: usize,
    /// Fraction of secret bits recovered by the sign rule.
    pub recovery: f64,
    pub discarded_weight: f64,
    /// Wall time of this simulation; excluded from determinism comparisons.
    pub seconds: f64,
}

/// Outcome of the increasing-`chi` attack with exact break search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChiBreakResult {
    /// All evaluated points, ascending in `chi`.
    pub points: Vec<ChiPoint>,
    /// Minimal evaluated `chi` with full recovery, if any.
    pub chi_break: Option<usize>,
    /// Candidate bitstring at `chi_break`.
    pub candidate: Option<BitString>,
}

/// Run the attack at a fixed bond dimension, optionally after bandwidth
/// reduction, and return the candidate in original qubit order.
pub fn mps_attack(c: &Circuit, chi: usize, reorder: bool) -> MpsResult<(BitString, Mps)> {
    let (routed, perm) = if reorder {
        let perm = rcm_order(&AdjacencyGraph::from_circuit(c));
        (c.apply_permutation(&perm).expect("permutation from same circuit"), Some(perm))
    } else {
        (c.clone(), None)
    };
    let m = mps_simulate(&routed, &TruncationPolicy::cap(chi))?;
    let z = m.z_expectations();
    let z_logical: Vec<f64> = match &perm {
        Some(p) => (0..c.n_qubits).map(|q| z[p.forward()[q]]).collect(),
        None => z,
    };
    Ok((bits_from_z(&z_logical), m))
}

/// Scan ascending bond dimensions until the secret is fully recovered, then
/// binary-search the exact minimal `chi` (at most 12 refinement steps).
/// An uncracked scan is a valid result carrying the fit inputs.
pub fn chi_break_search(
    c: &Circuit,
    s: &BitString,
    chi_grid: &[usize],
    reorder: bool,
) -> MpsResult<ChiBreakResult> {
    let mut points: Vec<ChiPoint> = Vec::new();
    let mut candidates: Vec<(usize, BitString)> = Vec::new();
    let mut eval = |chi: usize, points: &mut Vec<ChiPoint>| -> MpsResult<f64> {
        let t0 = std::time::Instant::now();
        let (candidate, m) = mps_attack(c, chi, reorder)?;
        let recovery = recovery_fraction(&candidate, s);
        points.push(ChiPoint {
            chi,
            recovery,
            discarded_weight: m.discarded_weight(),
            seconds: t0.elapsed().as_secs_f64(),
        });
        candidates.push((chi, candidate));
        Ok(recovery)
    };

    let mut last_fail: Option<usize> = None;
    let mut first_success: Option<usize> = None;
    for &chi in chi_grid {
        let r = eval(chi, &mut points)?;
        if r == 1.0 {
            first_success = Some(chi);
            break;
        }
        last_fail = Some(chi);
    }

    let chi_break = match first_success {
        None => None,
        Some(hi0) => {
            let mut hi = hi0;
            let mut lo = last_fail.unwrap_or(0); // no failing point: grid start cracked
            let mut iters = 0;
            while hi - lo > 1 && iters < 12 {
                let mid = lo + (hi - lo) / 2;
                let r = eval(mid, &mut points)?;
                if r == 1.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
                iters += 1;
            }
            Some(hi)
        }
    };

    points.sort_by_key(|p| p.chi);
    points.dedup_by_key(|p| p.chi);
    let candidate = chi_break
        .and_then(|cb| candidates.into_iter().find(|(chi, _)| *chi == cb).map(|(_, b)| b));
    Ok(ChiBreakResult { points, chi_break, candidate })
}

/// Saturation bond dimension `2^(N/2)`: no state on `N` qubits needs more.
pub fn chi_sat(n: usize) -> usize {
    1usize << (n / 2)
}

/// Measure the wall time of one truncated two-site update at each bond
/// dimension, on a synthetic chain whose interior bonds all equal that bond
/// dimension (so the contraction and SVD show their full cubic cost). Each
/// point is averaged over enough warm repetitions to swamp timer overhead.
pub fn measure_gate_times(chis: &[usize], seed: u64) -> Vec<(usize, f64)> {
    use rand::{Rng, SeedableRng};
    let mut out = Vec::new();
    for &chi in chis {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ chi as u64);
        // four-site chain with every interior bond at chi: the middle pair
        // update contracts a (2 chi) x chi x (2 chi) environment
        let mut random_tensor = |dl: usize, dr: usize| {
            let scale = 1.0 / ((dl * dr) as f64).sqrt();
            Tensor3 {
                dl,
                d: 2,
                dr,
                data: (0..dl * 2 * dr)
                    .map(|_| {
                        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale
                    })
                    .collect(),
            }
        };
        let mut chain = Chain {
            n: 4,
            d: 2,
            tensors: vec![
                random_tensor(1, chi),
                random_tensor(chi, chi),
                random_tensor(chi, chi),
                random_tensor(chi, 1),
            ],
            center: 1,
            discarded_weight: 0.0,
            max_bond_seen: chi,
        };
        let op = gate_2q_matrix(&Gate::Rzz { a: 0, b: 1, theta: 0.7 }, 0, 1);
        let policy = TruncationPolicy::cap(chi);
        // warmup settles the canonical form and touches all allocations
        chain.apply_2site(1, &op, &policy).expect("synthetic update");
        let reps = ((1usize << 24) / (chi * chi * chi).max(1)).clamp(4, 2000);
        let t0 = std::time::Instant::now();
        for _ in 0..reps {
            chain.apply_2site(1, &op, &policy).expect("synthetic update");
        }
        out.push((chi, t0.elapsed().as_secs_f64() / reps as f64));
    }
    out
}
