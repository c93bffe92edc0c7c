//! Dense statevector simulation: the ground-truth oracle.
//!
//! Amplitudes are indexed with qubit 0 as the most significant bit (see
//! [`crate::bits`]), so ascending index order is lexicographic bitstring
//! order. Memory is `16 * 2^n` bytes; simulation refuses registers above
//! [`MAX_DENSE_QUBITS`].

use num_complex::Complex64 as C64;
use rand::Rng;
use thiserror::Error;

use crate::bits::BitString;
use crate::circuit::{Circuit, Gate};

/// Largest register the dense oracle will allocate (16 GiB of amplitudes).
pub const MAX_DENSE_QUBITS: usize = 28;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("{n} qubits exceeds the dense simulation limit of {limit}")]
    TooManyQubits { n: usize, limit: usize },
    #[error("input bitstring has {len} bits, circuit has {n} qubits")]
    InputLength { len: usize, n: usize },
    #[error("shot count must be positive")]
    ZeroShots,
}

pub type SimResult<T> = Result<T, SimError>;

/// Dense complex amplitudes for an `n`-qubit register.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<C64>,
}

impl StateVector {
    /// `|0...0>` on `n` qubits.
    pub fn zero_state(n: usize) -> SimResult<Self> {
        Self::basis_state(&BitString::zeros(n))
    }

    /// A computational basis state.
    pub fn basis_state(bits: &BitString) -> SimResult<Self> {
        let n = bits.len();
        if n > MAX_DENSE_QUBITS {
            return Err(SimError::TooManyQubits { n, limit: MAX_DENSE_QUBITS });
        }
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n];
        amps[bits.to_index()] = C64::new(1.0, 0.0);
        Ok(StateVector { n, amps })
    }

    /// Wrap a raw amplitude vector; `amps.len()` must be `2^n`.
    pub fn from_amplitudes(n: usize, amps: Vec<C64>) -> Self {
        assert_eq!(amps.len(), 1usize << n, "amplitude count must be 2^n");
        StateVector { n, amps }
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitude(&self, bits: &BitString) -> C64 {
        self.amps[bits.to_index()]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `<other|self>`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| b.conj() * a)
            .sum()
    }

    pub fn apply_gate(&mut self, gate: &Gate) {
        apply_gate_to_amps(self.n, &mut self.amps, gate);
    }

    pub fn apply_circuit(&mut self, c: &Circuit) {
        for gate in &c.gates {
            self.apply_gate(gate);
        }
    }

    /// Measurement probabilities in index order.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `<Z_i>` for every qubit.
    pub fn z_expectations(&self) -> Vec<f64> {
        let mut z = vec![0.0; self.n];
        for (idx, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            if p == 0.0 {
                continue;
            }
            for (q, zq) in z.iter_mut().enumerate() {
                let bit = (idx >> (self.n - 1 - q)) & 1;
                *zq += if bit == 0 { p } else { -p };
            }
        }
        z
    }

    /// Highest-probability basis state; ties resolve to the lexicographically
    /// smallest bitstring (equivalently the lowest index).
    pub fn peak(&self) -> (BitString, f64) {
        let mut best_idx = 0;
        let mut best_p = self.amps[0].norm_sqr();
        for (idx, a) in self.amps.iter().enumerate().skip(1) {
            let p = a.norm_sqr();
            if p > best_p {
                best_p = p;
                best_idx = idx;
            }
        }
        (BitString::from_index(best_idx, self.n), best_p)
    }

    /// Draw `shots` basis states from the measurement distribution.
    pub fn sample(&self, rng: &mut impl Rng, shots: usize) -> SimResult<Vec<BitString>> {
        if shots == 0 {
            return Err(SimError::ZeroShots);
        }
        // cumulative distribution, then binary search per shot
        let mut cdf = Vec::with_capacity(self.amps.len());
        let mut acc = 0.0;
        for a in &self.amps {
            acc += a.norm_sqr();
            cdf.push(acc);
        }
        let total = acc;
        let mut out = Vec::with_capacity(shots);
        for _ in 0..shots {
            let u: f64 = rng.gen::<f64>() * total;
            let idx = cdf.partition_point(|&c| c <= u).min(self.amps.len() - 1);
            out.push(BitString::from_index(idx, self.n));
        }
        Ok(out)
    }
}

/// Apply `gate` to a length-`2^n` amplitude slice (qubit 0 = most
/// significant bit). Shared by the dense simulator and by per-column updates
/// of small unitaries.
pub fn apply_gate_to_amps(n: usize, amps: &mut [C64], gate: &Gate) {
    debug_assert_eq!(amps.len(), 1 << n);
    let stride = |q: usize| 1usize << (n - 1 - q);
    match gate {
        Gate::Rx { q, theta } => {
            let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
            let m = [
                [C64::new(c, 0.0), C64::new(0.0, -s)],
                [C64::new(0.0, -s), C64::new(c, 0.0)],
            ];
            apply_1q(amps, stride(*q), m);
        }
        Gate::Rz { q, theta } => {
            let s = stride(*q);
            let p0 = C64::from_polar(1.0, -theta / 2.0);
            let p1 = C64::from_polar(1.0, theta / 2.0);
            for (idx, a) in amps.iter_mut().enumerate() {
                *a *= if idx & s == 0 { p0 } else { p1 };
            }
        }
        Gate::Rzz { a, b, theta } => {
            let (ma, mb) = (stride(*a), stride(*b));
            let p0 = C64::from_polar(1.0, -theta / 2.0);
            let p1 = C64::from_polar(1.0, theta / 2.0);
            for (idx, amp) in amps.iter_mut().enumerate() {
                let parity = ((idx & ma) == 0) ^ ((idx & mb) == 0);
                *amp *= if parity { p1 } else { p0 };
            }
        }
        Gate::Swap { a, b } => {
            let (ma, mb) = (stride(*a), stride(*b));
            for idx in 0..amps.len() {
                if idx & ma != 0 && idx & mb == 0 {
                    amps.swap(idx, idx ^ ma ^ mb);
                }
            }
        }
        Gate::X { q } => {
            let m = stride(*q);
            for idx in 0..amps.len() {
                if idx & m == 0 {
                    amps.swap(idx, idx | m);
                }
            }
        }
        Gate::Mcry { target, controls, theta } => {
            let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
            let mt = stride(*target);
            let ctrl: Vec<(usize, usize)> =
                controls.iter().map(|&(q, p)| (stride(q), p as usize)).collect();
            for i0 in 0..amps.len() {
                if i0 & mt != 0 {
                    continue;
                }
                if ctrl.iter().all(|&(m, p)| ((i0 & m != 0) as usize) == p) {
                    let i1 = i0 | mt;
                    let (a, b) = (amps[i0], amps[i1]);
                    amps[i0] = c * a - s * b;
                    amps[i1] = s * a + c * b;
                }
            }
        }
        Gate::Mcx { target, controls } => {
            let mt = stride(*target);
            let ctrl: Vec<(usize, usize)> =
                controls.iter().map(|&(q, p)| (stride(q), p as usize)).collect();
            for i0 in 0..amps.len() {
                if i0 & mt != 0 {
                    continue;
                }
                if ctrl.iter().all(|&(m, p)| ((i0 & m != 0) as usize) == p) {
                    amps.swap(i0, i0 | mt);
                }
            }
        }
    }
}

fn apply_1q(amps: &mut [C64], s: usize, m: [[C64; 2]; 2]) {
    let dim = amps.len();
    let mut base = 0;
    while base < dim {
        for i0 in base..base + s {
            let i1 = i0 + s;
            let (a, b) = (amps[i0], amps[i1]);
            amps[i0] = m[0][0] * a + m[0][1] * b;
            amps[i1] = m[1][0] * a + m[1][1] * b;
        }
        base += 2 * s;
    }
}

/// Run `circuit` on the basis state `input` and return the final state.
pub fn simulate(circuit: &Circuit, input: &BitString) -> SimResult<StateVector> {
    if input.len() != circuit.n_qubits {
        return Err(SimError::InputLength {
            len: input.len(),
            n: circuit.n_qubits,
        });
    }
    let mut sv = StateVector::basis_state(input)?;
    sv.apply_circuit(circuit);
    Ok(sv)
}

/// `|<s|C|0^n>|^2`.
pub fn peak_weight(circuit: &Circuit, s: &BitString) -> SimResult<f64> {
    let sv = simulate(circuit, &BitString::zeros(circuit.n_qubits))?;
    if s.len() != circuit.n_qubits {
        return Err(SimError::InputLength {
            len: s.len(),
            n: circuit.n_qubits,
        });
    }
    Ok(sv.amplitude(s).norm_sqr())
}

/// Peak bitstring and weight of `C|0^n>`.
pub fn find_peak(circuit: &Circuit) -> SimResult<(BitString, f64)> {
    Ok(simulate(circuit, &BitString::zeros(circuit.n_qubits))?.peak())
}

/// Central finite-difference gradient of a scalar function of angles.
pub fn finite_difference_gradient(
    f: &mut impl FnMut(&[f64]) -> f64,
    x: &[f64],
    h: f64,
) -> Vec<f64> {
    let mut grad = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        grad.push((fp - fm) / (2.0 * h));
    }
    grad
}
