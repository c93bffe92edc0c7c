//! Desk-scale toolkit for peaked quantum circuits.
//!
//! A circuit is *peaked* when one output bitstring carries an outsized share
//! of the measurement probability. This crate builds such circuits on
//! purpose, hides the construction behind several obfuscation passes, and
//! then tries to recover the peak with a family of classical attacks:
//!
//! * [`forge`] - trains a shallow peaked circuit, pads it with an inverted
//!   identity block, and scrambles the result (angle sweeps, window masking,
//!   swap conjugations).
//! * [`statevector`] - dense oracle simulation, the ground truth everywhere.
//! * [`mps`] / [`mpo`] - bond-capped matrix-product attacks on a chain, with
//!   reverse Cuthill-McKee reordering from [`graph`].
//! * [`pps`] - Heisenberg-picture Pauli propagation with coefficient
//!   truncation.
//! * [`ttn`] - tree tensor networks with belief-propagation marginals and a
//!   greedy conditional bit-fixing attack.
//! * [`pcbs`] - a gadget that turns any verifier circuit into a
//!   peak-detection instance with provable yes/no thresholds.
//! * [`crypto`] - a toy symmetric scheme whose ciphertexts are forged peaked
//!   circuits.
//! * [`fits`] / [`attack`] / [`suite`] - marginal-readout attacks, cost-model
//!   fitting, break-point extrapolation, and batch orchestration.

pub mod attack;
pub mod bits;
pub mod circuit;
pub mod crypto;
pub mod fits;
pub mod forge;
pub mod graph;
pub mod mpo;
pub mod mps;
pub mod patch;
pub mod pcbs;
pub mod pps;
pub mod simplify;
pub mod statevector;
pub mod suite;
pub mod tensor;
pub mod ttn;

pub use bits::BitString;
pub use circuit::{Circuit, CircuitError, Gate, QubitPermutation};
pub use statevector::{find_peak, peak_weight, simulate, StateVector};
