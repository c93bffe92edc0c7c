//! Symmetric encryption from forged peaked circuits.
//!
//! Each plaintext block `s_i` becomes a circuit `E_i` that is peaked at the
//! masked output `y_i* = s_i xor G_k(ctr_i)` when run on the keyed input
//! `x_i* = F_k(ctr_i)`. The ciphertext is the list of circuit descriptions
//! plus their public nonces; without the key, finding the designated input or
//! reading the peak is a peak-search problem.
//!
//! Decryption simulates each block on its designated input, draws `N_s`
//! shots, and takes the empirical mode; the acceptance statistic is the mode
//! frequency over those `N_s` shots, which must reach `delta_min`, otherwise
//! the block is rejected as malformed or dishonest. Defaults:
//! `N_s = ceil(25 / delta^2)` and `delta_min = delta / 2` for a forge with
//! peak weight `delta`.
//!
//! `F` and `G` are HMAC-SHA256 in counter mode with domain-separation tags;
//! the per-block forge seed is derived the same way (tag `S`), so published
//! descriptions reveal neither the designated input nor the forge stream.

use hmac::{Hmac, Mac};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use std::collections::HashMap;
use thiserror::Error;

use crate::bits::BitString;
use crate::circuit::{Circuit, CircuitError, Gate};
use crate::forge::{forge_hqap, ForgeError, HqapRecipe};
use crate::statevector::{simulate, SimError};

type HmacSha256 = Hmac<Sha256>;

/// Minimum key length in bytes (128 bits).
pub const KEY_MIN_BYTES: usize = 16;

/// Nonce layout: 12 random prefix bytes plus a 4-byte big-endian block index.
pub const NONCE_PREFIX_BYTES: usize = 12;
pub const NONCE_BYTES: usize = NONCE_PREFIX_BYTES + 4;

#[derive(Debug, Error)]
pub enum CryptoError {
    #[error("key must be at least {KEY_MIN_BYTES} bytes, got {got}")]
    KeyTooShort { got: usize },
    #[error("bad nonce: {0}")]
    BadNonce(String),
    #[error("bad padding: {0}")]
    BadPadding(String),
    #[error("block {index}: circuit does not parse: {source}")]
    BadDescription { index: usize, source: CircuitError },
    #[error("gate {0} cannot absorb an input mask")]
    UnsupportedGate(String),
    #[error("blocks {rejected:?} rejected: malformed or dishonest ciphertexts")]
    BlocksRejected { rejected: Vec<usize>, report: Vec<BlockReport> },
    #[error(transparent)]
    Forge(#[from] ForgeError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// A pre-shared secret key of at least 128 bits.
#[derive(Clone)]
pub struct Key(Vec<u8>);

impl Key {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < KEY_MIN_BYTES {
            return Err(CryptoError::KeyTooShort { got: bytes.len() });
        }
        Ok(Key(bytes.to_vec()))
    }

    pub fn from_hex(text: &str) -> Result<Self, CryptoError> {
        let bytes = hex::decode(text.trim())
            .map_err(|e| CryptoError::BadNonce(format!("key hex: {e}")))?;
        Self::from_bytes(&bytes)
    }

    pub fn random(rng: &mut impl Rng) -> Self {
        let mut bytes = vec![0u8; 2 * KEY_MIN_BYTES];
        rng.fill(&mut bytes[..]);
        Key(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl std::fmt::Debug for Key {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Key({} bytes)", self.0.len())
    }
}

/// Keyed pseudorandom bytes: HMAC-SHA256 over `tag || 0x00 || ctr || le32(chunk)`,
/// concatenating chunks until `out_bytes` are produced.
pub fn prf_bytes(key: &Key, tag: &str, ctr: &[u8], out_bytes: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(out_bytes);
    let mut chunk = 0u32;
    while out.len() < out_bytes {
        let mut mac = HmacSha256::new_from_slice(&key.0).expect("hmac accepts any key length");
        mac.update(tag.as_bytes());
        mac.update(&[0u8]);
        mac.update(ctr);
        mac.update(&chunk.to_le_bytes());
        out.extend_from_slice(&mac.finalize().into_bytes());
        chunk += 1;
    }
    out.truncate(out_bytes);
    out
}

/// Keyed pseudorandom bitstring of exactly `out_bits` bits (MSB-first per byte).
pub fn prf(key: &Key, tag: &str, ctr: &[u8], out_bits: usize) -> BitString {
    let bytes = prf_bytes(key, tag, ctr, out_bits.div_ceil(8));
    let bits = bytes
        .iter()
        .flat_map(|byte| (0..8).map(move |i| (byte >> (7 - i)) & 1))
        .take(out_bits)
        .collect();
    BitString::from_bits(bits)
}

/// Designated input `x* = F_k(ctr)`.
pub fn prf_input(key: &Key, ctr: &[u8], n: usize) -> BitString {
    prf(key, "F", ctr, n)
}

/// Output mask `G_k(ctr)`.
pub fn prf_mask(key: &Key, ctr: &[u8], n: usize) -> BitString {
    prf(key, "G", ctr, n)
}

/// Per-block forge seed, derived so it never appears in the ciphertext.
pub fn prf_seed(key: &Key, ctr: &[u8]) -> u64 {
    let bytes = prf_bytes(key, "S", ctr, 8);
    u64::from_be_bytes(bytes.try_into().expect("eight bytes"))
}

/// One ciphertext block: a circuit description and its public nonce.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CiphertextBlock {
    /// Serialized circuit (JSON).
    pub desc: String,
    /// Nonce, hex encoded.
    pub ctr: String,
}

impl CiphertextBlock {
    pub fn nonce_bytes(&self) -> Result<Vec<u8>, CryptoError> {
        let bytes =
            hex::decode(&self.ctr).map_err(|e| CryptoError::BadNonce(format!("{e}")))?;
        if bytes.len() != NONCE_BYTES {
            return Err(CryptoError::BadNonce(format!(
                "expected {NONCE_BYTES} bytes, got {}",
                bytes.len()
            )));
        }
        Ok(bytes)
    }
}

/// Shot budget and acceptance threshold for decryption.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecryptionConfig {
    pub n_shots: usize,
    pub delta_min: f64,
}

impl DecryptionConfig {
    /// Defaults for a forge with peak weight `delta`:
    /// `N_s = ceil(25 / delta^2)`, `delta_min = delta / 2`.
    pub fn for_delta(delta: f64) -> Self {
        assert!(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
        DecryptionConfig {
            n_shots: (25.0 / (delta * delta)).ceil() as usize,
            delta_min: delta / 2.0,
        }
    }

    pub fn validate(&self) -> Result<(), CryptoError> {
        if self.n_shots < 1 {
            return Err(CryptoError::BadNonce("n_shots must be >= 1".to_string()));
        }
        if !(self.delta_min > 0.0 && self.delta_min < 1.0) {
            return Err(CryptoError::BadNonce(format!(
                "delta_min {} outside (0, 1)",
                self.delta_min
            )));
        }
        Ok(())
    }
}

/// What decryption measured on one block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockReport {
    pub index: usize,
    pub ctr: String,
    /// Empirical mode of the sampled outputs.
    pub mode: BitString,
    /// Mode frequency over the shot budget.
    pub mode_frequency: f64,
    pub accepted: bool,
}

/// Split a message into `n`-bit blocks with self-delimiting padding: the bit
/// stream is the message bits (MSB-first per byte) followed by a single 1,
/// zero-filled to a block multiple. An empty message yields no blocks.
pub fn message_to_blocks(message: &[u8], n: usize) -> Vec<BitString> {
    assert!(n >= 1, "block size must be at least 1");
    if message.is_empty() {
        return Vec::new();
    }
    let mut bits: Vec<u8> = message
        .iter()
        .flat_map(|byte| (0..8).map(move |i| (byte >> (7 - i)) & 1))
        .collect();
    bits.push(1);
    while bits.len() % n != 0 {
        bits.push(0);
    }
    bits.chunks(n).map(|chunk| BitString::from_bits(chunk.to_vec())).collect()
}

/// Invert [`message_to_blocks`]: concatenate, strip the trailing zero fill
/// and the 1 marker, and repack bytes.
pub fn blocks_to_message(blocks: &[BitString]) -> Result<Vec<u8>, CryptoError> {
    if blocks.is_empty() {
        return Ok(Vec::new());
    }
    let mut bits: Vec<u8> = blocks.iter().flat_map(|b| b.bits().to_vec()).collect();
    while bits.last() == Some(&0) {
        bits.pop();
    }
    if bits.pop() != Some(1) {
        return Err(CryptoError::BadPadding("missing end marker".to_string()));
    }
    if bits.len() % 8 != 0 {
        return Err(CryptoError::BadPadding(format!(
            "{} message bits is not a whole number of bytes",
            bits.len()
        )));
    }
    Ok(bits
        .chunks(8)
        .map(|byte| byte.iter().fold(0u8, |acc, &b| (acc << 1) | b))
        .collect())
}

/// Fold a layer of X gates (applied before `c` on the wires set in `mask`)
/// into the circuit body: X commutes with RX up to an angle shift of pi,
/// negates RZ/RZZ angles as it passes, and hops across SWAP. Any X that
/// never meets an RX survives as an explicit gate at the end; the overall
/// unitary is preserved up to global phase either way.
pub fn fold_input_mask(c: &Circuit, mask: &BitString) -> Result<Circuit, CryptoError> {
    assert_eq!(mask.len(), c.n_qubits, "mask length mismatch");
    let mut pending: Vec<bool> = mask.bits().iter().map(|&b| b == 1).collect();
    let mut out = Circuit::new(c.n_qubits);
    out.meta = c.meta.clone();
    for gate in &c.gates {
        match *gate {
            Gate::Rx { q, theta } => {
                if pending[q] {
                    pending[q] = false;
                    out.push(Gate::Rx { q, theta: theta + std::f64::consts::PI });
                } else {
                    out.push(gate.clone());
                }
            }
            Gate::Rz { q, theta } => {
                let sign = if pending[q] { -1.0 } else { 1.0 };
                out.push(Gate::Rz { q, theta: sign * theta });
            }
            Gate::Rzz { a, b, theta } => {
                let sign = if pending[a] != pending[b] { -1.0 } else { 1.0 };
                out.push(Gate::Rzz { a, b, theta: sign * theta });
            }
            Gate::Swap { a, b } => {
                pending.swap(a, b);
                out.push(gate.clone());
            }
            Gate::X { q } => {
                if pending[q] {
                    pending[q] = false; // the two flips cancel
                } else {
                    out.push(gate.clone());
                }
            }
            Gate::Mcry { .. } | Gate::Mcx { .. } => {
                return Err(CryptoError::UnsupportedGate(format!("{gate:?}")));
            }
        }
    }
    for (q, still) in pending.iter().enumerate() {
        if *still {
            out.push(Gate::X { q });
        }
    }
    Ok(out)
}

/// Encrypt a message: one forged peaked circuit per `n`-bit block, peaked at
/// the masked plaintext on the keyed designated input. The recipe's `target`
/// and `seed` are overridden per block; `rng` only supplies the fresh nonce
/// prefix. Blocks are forged in parallel and emitted in order.
pub fn encrypt(
    key: &Key,
    message: &[u8],
    recipe: &HqapRecipe,
    rng: &mut impl Rng,
) -> Result<Vec<CiphertextBlock>, CryptoError> {
    let n = recipe.n_qubits;
    let blocks = message_to_blocks(message, n);
    let mut prefix = [0u8; NONCE_PREFIX_BYTES];
    rng.fill(&mut prefix[..]);
    blocks
        .par_iter()
        .enumerate()
        .map(|(index, s)| {
            let mut ctr = prefix.to_vec();
            ctr.extend_from_slice(&(index as u32).to_be_bytes());
            let x_star = prf_input(key, &ctr, n);
            let y_star = s.xor(&prf_mask(key, &ctr, n)).expect("equal lengths");
            let mut block_recipe = recipe.clone();
            block_recipe.target = y_star.to_string();
            block_recipe.seed = prf_seed(key, &ctr);
            let forged = forge_hqap(&block_recipe)?;
            let mut circuit = fold_input_mask(&forged.circuit, &x_star)?;
            circuit.meta.clear();
            Ok(CiphertextBlock { desc: circuit.to_json(), ctr: hex::encode(ctr) })
        })
        .collect()
}

/// Decrypt: per block, simulate on the keyed input, draw `cfg.n_shots`
/// samples (seeded per block from `seed`, independent of thread count), take
/// the mode, unmask. Fails if any block's mode frequency stays below
/// `cfg.delta_min`, naming the rejected blocks.
pub fn decrypt(
    key: &Key,
    blocks: &[CiphertextBlock],
    cfg: &DecryptionConfig,
    seed: u64,
) -> Result<(Vec<u8>, Vec<BlockReport>), CryptoError> {
    cfg.validate()?;
    let outcomes: Vec<(BitString, BlockReport)> = blocks
        .par_iter()
        .enumerate()
        .map(|(index, block)| -> Result<(BitString, BlockReport), CryptoError> {
            let circuit = Circuit::from_json(&block.desc)
                .map_err(|source| CryptoError::BadDescription { index, source })?;
            let ctr = block.nonce_bytes()?;
            let n = circuit.n_qubits;
            let x_star = prf_input(key, &ctr, n);
            let sv = simulate(&circuit, &x_star)?;
            let mut shot_rng =
                ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9e3779b97f4a7c15));
            let shots = sv.sample(&mut shot_rng, cfg.n_shots)?;
            let mut counts: HashMap<&BitString, usize> = HashMap::new();
            for shot in &shots {
                *counts.entry(shot).or_insert(0) += 1;
            }
            let (mode, count) = counts
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(a.0)))
                .expect("n_shots >= 1");
            let mode_frequency = count as f64 / cfg.n_shots as f64;
            let unmasked = mode.xor(&prf_mask(key, &ctr, n)).expect("equal lengths");
            let report = BlockReport {
                index,
                ctr: block.ctr.clone(),
                mode: mode.clone(),
                mode_frequency,
                accepted: mode_frequency >= cfg.delta_min,
            };
            Ok((unmasked, report))
        })
        .collect::<Result<_, _>>()?;

    let rejected: Vec<usize> =
        outcomes.iter().filter(|(_, r)| !r.accepted).map(|(_, r)| r.index).collect();
    let report: Vec<BlockReport> = outcomes.iter().map(|(_, r)| r.clone()).collect();
    if !rejected.is_empty() {
        return Err(CryptoError::BlocksRejected { rejected, report });
    }
    let bits: Vec<BitString> = outcomes.into_iter().map(|(s, _)| s).collect();
    let message = blocks_to_message(&bits)?;
    Ok((message, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::{brickwork, PStructure, TrainConfig};
    use crate::statevector::StateVector;

    fn test_key() -> Key {
        Key::from_bytes(b"0123456789abcdef").unwrap()
    }

    /// A fast recipe for round-trip tests: small blocks, modest obfuscation,
    /// but a deep enough identity insert that mid-circuit tampers scramble.
    fn light_recipe(n: usize, delta_target: f64) -> HqapRecipe {
        HqapRecipe {
            n_qubits: n,
            r_rzz: 10,
            p_rzz: 10,
            u_rzz: 20,
            p_structure: PStructure::Random,
            window_gates: 6,
            window_qubits: 3,
            sweep_rounds: 2,
            masks: 2,
            swaps: 4,
            train: TrainConfig {
                delta_target,
                delta_min: delta_target * 0.85,
                ..TrainConfig::default()
            },
            ..HqapRecipe::default()
        }
    }

    #[test]
    fn key_length_enforced() {
        assert!(matches!(
            Key::from_bytes(b"short"),
            Err(CryptoError::KeyTooShort { got: 5 })
        ));
        Key::from_bytes(&[0u8; 16]).unwrap();
    }

    #[test]
    fn prf_fixed_vectors_and_determinism() {
        let key = test_key();
        let ctr: Vec<u8> = (0..16).collect();
        // frozen first-chunk outputs of HMAC-SHA256(key, tag || 0 || ctr || le32(0))
        assert_eq!(
            hex::encode(prf_bytes(&key, "F", &ctr, 32)),
            "dbe8708e8b79cf55c31aa15b454ff16e3d357c31314246341166d73e42c17177"
        );
        assert_eq!(
            hex::encode(prf_bytes(&key, "G", &ctr, 32)),
            "1c69abfffd7b0fb9897fda93eb1af6a2da3e7f843cadd3c09688802cf588bc56"
        );
        assert_eq!(
            prf_seed(&key, &ctr),
            u64::from_be_bytes(hex::decode("7f24f8b301301237").unwrap().try_into().unwrap())
        );

        // determinism and length
        assert_eq!(prf(&key, "F", &ctr, 10), prf(&key, "F", &ctr, 10));
        assert_eq!(prf(&key, "F", &ctr, 10).len(), 10);
        assert_eq!(prf(&key, "F", &ctr, 300).len(), 300);
        // domain separation and nonce sensitivity
        assert_ne!(prf(&key, "F", &ctr, 64), prf(&key, "G", &ctr, 64));
        assert_ne!(prf(&key, "F", &ctr, 64), prf(&key, "F", &[1u8; 16], 64));
        // bit expansion matches byte output (MSB first)
        let bits = prf(&key, "F", &ctr, 8);
        assert_eq!(bits.to_index() as u8, 0xdb);
    }

    #[test]
    fn block_packing_round_trip() {
        for n in [3usize, 10, 12] {
            for len in [0usize, 1, 2, 5, 64] {
                let message: Vec<u8> = (0..len as u8).map(|i| i.wrapping_mul(37) ^ 0x5a).collect();
                let blocks = message_to_blocks(&message, n);
                if len == 0 {
                    assert!(blocks.is_empty());
                } else {
                    assert_eq!(blocks.len(), (8 * len + 1).div_ceil(n));
                }
                assert!(blocks.iter().all(|b| b.len() == n));
                assert_eq!(blocks_to_message(&blocks).unwrap(), message);
            }
        }
        // all-zero blocks have no marker
        assert!(matches!(
            blocks_to_message(&[BitString::zeros(8)]),
            Err(CryptoError::BadPadding(_))
        ));
    }

    #[test]
    fn fold_input_mask_preserves_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..4u64 {
            let n = 5;
            let mut c = brickwork(n, 8, &mut rng);
            c.push(Gate::Rz { q: 2, theta: 0.4 });
            c.push(Gate::Swap { a: 0, b: 3 });
            c.push(Gate::X { q: 1 });
            let mask = BitString::from_index((7 + 5 * trial as usize) % (1 << n), n);
            let folded = fold_input_mask(&c, &mask).unwrap();

            for input_index in [0usize, 9, 21] {
                let input = BitString::from_index(input_index, n);
                // reference: X layer first, then the body
                let mut reference = Circuit::new(n);
                for q in 0..n {
                    if mask.bit(q) == 1 {
                        reference.push(Gate::X { q });
                    }
                }
                for gate in &c.gates {
                    reference.push(gate.clone());
                }
                let want = simulate(&reference, &input).unwrap();
                let got = simulate(&folded, &input).unwrap();
                assert_close_up_to_phase(&want, &got);
            }
        }
    }

    fn assert_close_up_to_phase(a: &StateVector, b: &StateVector) {
        let pivot = a
            .amplitudes()
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
            .unwrap()
            .0;
        let phase = b.amplitudes()[pivot] / a.amplitudes()[pivot];
        assert!((phase.norm() - 1.0).abs() < 1e-9, "not a pure phase: {phase}");
        for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
            assert!((x * phase - y).norm() < 1e-9);
        }
    }

    #[test]
    fn empty_message_round_trips_to_empty() {
        let key = test_key();
        let recipe = light_recipe(6, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let blocks = encrypt(&key, b"", &recipe, &mut rng).unwrap();
        assert!(blocks.is_empty());
        let (message, report) =
            decrypt(&key, &blocks, &DecryptionConfig::for_delta(0.4), 7).unwrap();
        assert!(message.is_empty());
        assert!(report.is_empty());
    }

    #[test]
    fn single_block_round_trip() {
        let key = test_key();
        let recipe = light_recipe(10, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let message = b"A";
        let blocks = encrypt(&key, message, &recipe, &mut rng).unwrap();
        assert_eq!(blocks.len(), 1);
        let circuit = Circuit::from_json(&blocks[0].desc).unwrap();
        assert_eq!(circuit.n_qubits, 10);
        // the folded input layer leaves no bare X gates behind
        assert!(!circuit.gates.iter().any(|g| matches!(g, Gate::X { .. })));
        assert!(circuit.meta.is_empty());

        let cfg = DecryptionConfig::for_delta(0.35);
        let (recovered, report) = decrypt(&key, &blocks, &cfg, 99).unwrap();
        assert_eq!(recovered, message);
        assert_eq!(report.len(), 1);
        assert!(report[0].accepted);
        assert!(report[0].mode_frequency >= cfg.delta_min);
    }

    #[test]
    fn nonces_unique_and_fresh_per_encryption() {
        let key = test_key();
        let recipe = light_recipe(6, 0.4);
        let message = b"AB"; // 17 bits -> 3 blocks of 6
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let first = encrypt(&key, message, &recipe, &mut rng).unwrap();
        let second = encrypt(&key, message, &recipe, &mut rng).unwrap();
        assert_eq!(first.len(), 3);

        let nonces: std::collections::BTreeSet<&str> =
            first.iter().map(|b| b.ctr.as_str()).collect();
        assert_eq!(nonces.len(), first.len(), "nonces repeat within a message");

        for (a, b) in first.iter().zip(&second) {
            assert_ne!(a.ctr, b.ctr, "nonce reused across encryptions");
            assert_ne!(a.desc, b.desc, "descriptions repeat across encryptions");
        }
    }

    /// Perturb the angle of the gate at `victim` by pi and return the blocks
    /// with block `index` replaced by the tampered description.
    fn tamper_block(blocks: &[CiphertextBlock], index: usize, victim: usize) -> Vec<CiphertextBlock> {
        let mut circuit = Circuit::from_json(&blocks[index].desc).unwrap();
        match &mut circuit.gates[victim] {
            Gate::Rx { theta, .. } | Gate::Rz { theta, .. } | Gate::Rzz { theta, .. } => {
                *theta += std::f64::consts::PI;
            }
            other => panic!("gate {victim} is not a rotation: {other:?}"),
        }
        let mut tampered = blocks.to_vec();
        tampered[index].desc = circuit.to_json();
        tampered
    }

    /// Entangling-gate positions in the middle half of the circuit, ordered
    /// from the centre outwards: the deepest-conjugated tamper sites.
    fn mid_rzz_positions(circuit: &Circuit) -> Vec<usize> {
        let len = circuit.gates.len();
        let mut positions: Vec<usize> = (len / 4..3 * len / 4)
            .filter(|&i| matches!(circuit.gates[i], Gate::Rzz { .. }))
            .collect();
        positions.sort_by_key(|&i| i.abs_diff(len / 2));
        positions
    }

    #[test]
    fn tampered_block_is_rejected() {
        let key = test_key();
        let recipe = light_recipe(10, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let blocks = encrypt(&key, b"ok", &recipe, &mut rng).unwrap();
        assert_eq!(blocks.len(), 2);

        let circuit = Circuit::from_json(&blocks[1].desc).unwrap();
        let cfg = DecryptionConfig::for_delta(0.35);
        let mut rejected_at = None;
        let mut clean_round_trips = 0usize;
        for victim in mid_rzz_positions(&circuit) {
            let tampered = tamper_block(&blocks, 1, victim);
            match decrypt(&key, &tampered, &cfg, 11) {
                Err(CryptoError::BlocksRejected { rejected, report }) => {
                    assert_eq!(rejected, vec![1]);
                    assert!(report[0].accepted);
                    assert!(!report[1].accepted);
                    assert!(report[1].mode_frequency < cfg.delta_min);
                    rejected_at = Some(victim);
                    break;
                }
                // a tamper that leaves some peak standing decodes to garbage
                Err(CryptoError::BadPadding(_)) => {}
                Ok((recovered, _)) => {
                    if recovered == b"ok" {
                        clean_round_trips += 1;
                    }
                }
                Err(other) => panic!("unexpected error {other:?}"),
            }
        }
        assert!(
            rejected_at.is_some(),
            "no mid-circuit tamper was rejected ({clean_round_trips} survived cleanly)"
        );
    }

    #[test]
    fn wrong_key_never_recovers_plaintext() {
        let key = test_key();
        let wrong = Key::from_bytes(b"fedcba9876543210").unwrap();
        let recipe = light_recipe(10, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let message = b"hi";
        let blocks = encrypt(&key, message, &recipe, &mut rng).unwrap();

        // honest threshold: the wrong key misses the designated input, so
        // blocks are rejected or decode to garbage, never to the plaintext
        let cfg = DecryptionConfig::for_delta(0.35);
        match decrypt(&wrong, &blocks, &cfg, 13) {
            Err(CryptoError::BlocksRejected { rejected, .. }) => {
                assert!(!rejected.is_empty());
            }
            Err(CryptoError::BadPadding(_)) => {}
            Ok((recovered, _)) => assert_ne!(recovered, message),
            Err(other) => panic!("unexpected error {other:?}"),
        }

        // even with the threshold disabled the unmasked bits are garbage
        let permissive = DecryptionConfig { n_shots: 64, delta_min: 1e-9 };
        match decrypt(&wrong, &blocks, &permissive, 13) {
            Ok((recovered, _)) => assert_ne!(recovered, message),
            Err(CryptoError::BadPadding(_)) => {}
            Err(other) => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn ciphertext_does_not_embed_plaintext() {
        let key = test_key();
        let recipe = light_recipe(10, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let message = b"SECRETXY";
        let blocks = encrypt(&key, message, &recipe, &mut rng).unwrap();
        let container = serde_json::to_string(&blocks).unwrap();
        assert!(container.starts_with('['), "container must be a JSON array");

        let container_bytes = container.as_bytes();
        assert!(
            !container_bytes.windows(message.len()).any(|w| w == *message),
            "plaintext bytes appear verbatim in the ciphertext"
        );
        // the raw block bit patterns are masked before forging
        for s in message_to_blocks(message, recipe.n_qubits) {
            assert!(!container.contains(&s.to_string()), "block bits leak: {s}");
        }
    }

    #[test]
    fn decrypt_is_seed_deterministic() {
        let key = test_key();
        let recipe = light_recipe(8, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let blocks = encrypt(&key, b"det", &recipe, &mut rng).unwrap();
        let cfg = DecryptionConfig::for_delta(0.35);
        let (m1, r1) = decrypt(&key, &blocks, &cfg, 21).unwrap();
        let (m2, r2) = decrypt(&key, &blocks, &cfg, 21).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(serde_json::to_string(&r1).unwrap(), serde_json::to_string(&r2).unwrap());
    }

    #[test]
    fn gadget_gates_cannot_absorb_masks() {
        let mut c = Circuit::new(2);
        c.push(Gate::Mcx { target: 1, controls: vec![(0, 1)] });
        let mask = BitString::from_index(2, 2);
        assert!(matches!(
            fold_input_mask(&c, &mask),
            Err(CryptoError::UnsupportedGate(_))
        ));
    }
}
