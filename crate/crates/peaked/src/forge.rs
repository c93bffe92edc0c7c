//! Construction and obfuscation of peaked circuits.
//!
//! The pipeline assembles a circuit of the form `R > U > U^dag > P` (left to
//! right application): a random brickwork `R`, an inserted identity block
//! `U > U^dag`, and a trained patch `P` that concentrates the output of
//! `R` onto a chosen bitstring. Three scrambling passes then hide the
//! construction without moving the output state beyond a controlled budget:
//!
//! * **sweeping** kicks the angles of a gate window and retrains the window
//!   against its own original unitary (trace-fidelity loss at most
//!   `eps_patch`), leaving structure intact but angles decorrelated;
//! * **masking** replaces a small window with a freshly sampled gate
//!   structure trained to the same unitary;
//! * **swap conjugation** wraps random segments in `SWAP` pairs and relabels
//!   the wrapped gates, which is exact; swaps that end up leading the
//!   circuit act trivially on `|0..0>` and are deleted.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bits::BitString;
use crate::circuit::{Circuit, CircuitError, Gate};
use crate::patch::{patch_unitary, trace_loss_and_gradient, PatchError, PatchWindow};
use crate::statevector::{peak_weight, simulate, SimError, StateVector};

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("invalid recipe: {0}")]
    BadRecipe(String),
    #[error("training stagnated: best peak weight {best_delta:.6} below floor {floor:.6}")]
    TrainingStagnated { best_delta: f64, floor: f64 },
    #[error("sweep of window {start}..{end} failed to reach {eps:.1e} (final loss {loss:.3e})")]
    SweepFailed { start: usize, end: usize, eps: f64, loss: f64 },
    #[error("mask of window {start}..{end} failed to reach {eps:.1e} (final loss {loss:.3e})")]
    MaskFailed { start: usize, end: usize, eps: f64, loss: f64 },
    #[error("circuits do not share a gate structure (gate {index}: {left} vs {right})")]
    StructureMismatch { index: usize, left: String, right: String },
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Patch(#[from] PatchError),
}

pub type ForgeResult<T> = Result<T, ForgeError>;

// ---------------------------------------------------------------------------
// Recipe
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// Training stops once the peak weight reaches this value.
    #[serde(default = "default_delta_target")]
    pub delta_target: f64,
    /// Hard failure if the best restart stays below this value.
    #[serde(default = "default_delta_min")]
    pub delta_min: f64,
}

fn default_lr() -> f64 { 0.25 }
fn default_max_iters() -> usize { 2000 }
fn default_restarts() -> usize { 3 }
fn default_delta_target() -> f64 { 0.1 }
fn default_delta_min() -> f64 { 0.05 }

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: default_lr(),
            max_iters: default_max_iters(),
            restarts: default_restarts(),
            delta_target: default_delta_target(),
            delta_min: default_delta_min(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PStructure {
    /// Fresh random brickwork structure, randomly initialized angles.
    Random,
    /// `P` starts as the exact inverse of `R` plus a bit-flip layer; requires
    /// `p_rzz >= r_rzz` and yields peak weight 1 before training.
    Mirror,
}

/// Everything needed to reproduce one forged circuit.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HqapRecipe {
    #[serde(default = "default_version")]
    pub version: u64,
    pub n_qubits: usize,
    /// `"random"` or an explicit bitstring of length `n_qubits`.
    #[serde(default = "default_target")]
    pub target: String,
    /// RZZ counts of the three generated segments.
    pub r_rzz: usize,
    pub p_rzz: usize,
    pub u_rzz: usize,
    #[serde(default = "default_p_structure")]
    pub p_structure: PStructure,
    /// Sweep window length in gates and qubit cap.
    #[serde(default = "default_window_gates")]
    pub window_gates: usize,
    #[serde(default = "default_window_qubits")]
    pub window_qubits: usize,
    #[serde(default = "default_sweep_rounds")]
    pub sweep_rounds: usize,
    /// Kick magnitude in radians for sweeping.
    #[serde(default = "default_kick")]
    pub kick: f64,
    #[serde(default = "default_masks")]
    pub masks: usize,
    #[serde(default = "default_swaps")]
    pub swaps: usize,
    /// Trace-fidelity loss budget per swept or masked window.
    #[serde(default = "default_eps_patch")]
    pub eps_patch: f64,
    #[serde(default)]
    pub train: TrainConfig,
    /// Scramble the whole circuit instead of only the `R > U` prefix.
    #[serde(default)]
    pub scramble_suffix: bool,
    pub seed: u64,
}

impl Default for HqapRecipe {
    fn default() -> Self {
        HqapRecipe {
            version: default_version(),
            n_qubits: 8,
            target: default_target(),
            r_rzz: 8,
            p_rzz: 8,
            u_rzz: 12,
            p_structure: default_p_structure(),
            window_gates: default_window_gates(),
            window_qubits: default_window_qubits(),
            sweep_rounds: default_sweep_rounds(),
            kick: default_kick(),
            masks: default_masks(),
            swaps: default_swaps(),
            eps_patch: default_eps_patch(),
            train: TrainConfig::default(),
            scramble_suffix: false,
            seed: 0,
        }
    }
}

fn default_version() -> u64 { 1 }
fn default_target() -> String { "random".to_string() }
fn default_p_structure() -> PStructure { PStructure::Random }
fn default_window_gates() -> usize { 10 }
fn default_window_qubits() -> usize { 4 }
fn default_sweep_rounds() -> usize { 5 }
fn default_kick() -> f64 { 0.3 }
fn default_masks() -> usize { 4 }
fn default_swaps() -> usize { 8 }
fn default_eps_patch() -> f64 { 1e-4 }

impl HqapRecipe {
    pub fn from_json(text: &str) -> ForgeResult<Self> {
        let r: HqapRecipe =
            serde_json::from_str(text).map_err(|e| ForgeError::BadRecipe(e.to_string()))?;
        r.validate()?;
        Ok(r)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("recipe serialization")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("recipe serialization")
    }

    pub fn validate(&self) -> ForgeResult<()> {
        if self.version != 1 {
            return Err(ForgeError::BadRecipe(format!("unsupported version {}", self.version)));
        }
        if self.n_qubits < 2 || self.n_qubits > crate::statevector::MAX_DENSE_QUBITS {
            return Err(ForgeError::BadRecipe(format!(
                "n_qubits {} outside 2..={}",
                self.n_qubits,
                crate::statevector::MAX_DENSE_QUBITS
            )));
        }
        if self.target != "random" {
            let bits = BitString::parse(&self.target)
                .map_err(|e| ForgeError::BadRecipe(format!("target: {e}")))?;
            if bits.len() != self.n_qubits {
                return Err(ForgeError::BadRecipe(format!(
                    "target has {} bits, circuit has {} qubits",
                    bits.len(),
                    self.n_qubits
                )));
            }
        }
        if self.p_structure == PStructure::Mirror && self.p_rzz < self.r_rzz {
            return Err(ForgeError::BadRecipe(
                "mirror structure needs p_rzz >= r_rzz".to_string(),
            ));
        }
        if !(0.0..1.0).contains(&self.train.delta_target) && self.train.delta_target != 1.0 {
            return Err(ForgeError::BadRecipe("delta_target outside (0, 1]".to_string()));
        }
        if self.eps_patch <= 0.0 || self.eps_patch > 0.1 {
            return Err(ForgeError::BadRecipe("eps_patch outside (0, 0.1]".to_string()));
        }
        if !(2..=6).contains(&self.window_qubits) {
            return Err(ForgeError::BadRecipe(format!(
                "window_qubits {} outside 2..=6",
                self.window_qubits
            )));
        }
        if self.kick <= 0.0 {
            return Err(ForgeError::BadRecipe("kick must be positive".to_string()));
        }
        Ok(())
    }

    pub fn sha256(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_json().as_bytes());
        hex::encode(h.finalize())
    }

    /// Stage-tagged RNG so every pipeline stage is independently seeded.
    fn rng(&self, stage: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stage);
        rng
    }
}

/// Proof obligations for a forged circuit: where the peak is and how heavy it
/// was at every pipeline stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeakCertificate {
    pub version: u64,
    pub bitstring: BitString,
    /// Final oracle-verified peak weight.
    pub delta: f64,
    /// `(stage name, peak weight after that stage)` in pipeline order.
    pub stage_deltas: Vec<(String, f64)>,
    pub recipe_sha256: String,
    pub seed: u64,
}

impl PeakCertificate {
    pub fn from_json(text: &str) -> ForgeResult<Self> {
        serde_json::from_str(text).map_err(|e| ForgeError::BadRecipe(e.to_string()))
    }
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serialization")
    }
}

// ---------------------------------------------------------------------------
// Brickwork generation
// ---------------------------------------------------------------------------

/// Random all-to-all brickwork: layers pair up the qubits at random; each
/// pair gets per-qubit `RX`/`RZ` rotations followed by an `RZZ`; an unpaired
/// qubit (odd `n`) still gets its rotations. Generation stops exactly at
/// `rzz_count` entangling gates, allowing a partial final layer.
pub fn brickwork(n: usize, rzz_count: usize, rng: &mut ChaCha8Rng) -> Circuit {
    use rand::seq::SliceRandom;
    let mut gates = Vec::new();
    let mut placed = 0;
    let angle = |rng: &mut ChaCha8Rng| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    while placed < rzz_count {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        for pair in order.chunks(2) {
            if placed >= rzz_count {
                break;
            }
            if let [a, b] = *pair {
                gates.push(Gate::Rx { q: a, theta: angle(rng) });
                gates.push(Gate::Rz { q: a, theta: angle(rng) });
                gates.push(Gate::Rx { q: b, theta: angle(rng) });
                gates.push(Gate::Rz { q: b, theta: angle(rng) });
                gates.push(Gate::Rzz { a, b, theta: angle(rng) });
                placed += 1;
            } else if let [q] = *pair {
                gates.push(Gate::Rx { q, theta: angle(rng) });
                gates.push(Gate::Rz { q, theta: angle(rng) });
            }
        }
    }
    Circuit { n_qubits: n, gates, meta: Default::default() }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The trained patch `P`.
    pub p: Circuit,
    /// Peak weight of `R > P` at the target bitstring.
    pub delta: f64,
    pub iterations: usize,
    pub restarts_used: usize,
}

enum PauliGen {
    X(usize),
    Z(usize),
    Zz(usize, usize),
}

fn pauli_gen(gate: &Gate) -> Option<PauliGen> {
    match gate {
        Gate::Rx { q, .. } => Some(PauliGen::X(*q)),
        Gate::Rz { q, .. } => Some(PauliGen::Z(*q)),
        Gate::Rzz { a, b, .. } => Some(PauliGen::Zz(*a, *b)),
        _ => None,
    }
}

/// `<mu| G |phi>` for a Pauli generator, without materializing `G|phi>`.
fn sandwich(n: usize, mu: &[C64], g: &PauliGen, phi: &[C64]) -> C64 {
    let stride = |q: usize| 1usize << (n - 1 - q);
    let mut acc = C64::new(0.0, 0.0);
    match g {
        PauliGen::X(q) => {
            let m = stride(*q);
            for (x, m_amp) in mu.iter().enumerate() {
                acc += m_amp.conj() * phi[x ^ m];
            }
        }
        PauliGen::Z(q) => {
            let m = stride(*q);
            for (x, m_amp) in mu.iter().enumerate() {
                let s = if x & m == 0 { 1.0 } else { -1.0 };
                acc += m_amp.conj() * phi[x] * s;
            }
        }
        PauliGen::Zz(a, b) => {
            let (ma, mb) = (stride(*a), stride(*b));
            for (x, m_amp) in mu.iter().enumerate() {
                let parity = ((x & ma) == 0) ^ ((x & mb) == 0);
                let s = if parity { -1.0 } else { 1.0 };
                acc += m_amp.conj() * phi[x] * s;
            }
        }
    }
    acc
}

/// Peak weight of `P |psi_r>` at `s` plus its gradient with respect to the
/// rotation angles of `p_gates`, via one forward and one backward sweep.
fn peak_objective(
    n: usize,
    psi_r: &StateVector,
    p_gates: &[Gate],
    s: &BitString,
) -> (f64, Vec<f64>) {
    let mut phi = psi_r.clone();
    for g in p_gates {
        phi.apply_gate(g);
    }
    let a = phi.amplitude(s);
    let delta = a.norm_sqr();

    let mut mu = StateVector::basis_state(s).expect("basis state within dense limit");
    let mut grad = Vec::new();
    for gate in p_gates.iter().rev() {
        if let Some(g) = pauli_gen(gate) {
            let gk = C64::new(0.0, -0.5)
                * sandwich(n, mu.amplitudes(), &g, phi.amplitudes());
            grad.push(2.0 * (a.conj() * gk).re);
        } else if gate.theta().is_some() {
            grad.push(0.0);
        }
        let adj = gate.adjoint();
        phi.apply_gate(&adj);
        mu.apply_gate(&adj);
    }
    grad.reverse();
    (delta, grad)
}

/// Gradient descent with a multiplicatively adapted step: grow on
/// improvement, halve on failure, stop at the step floor.
fn adaptive_minimize(
    eval: &mut impl FnMut(&[f64]) -> (f64, Vec<f64>),
    x0: Vec<f64>,
    lr: f64,
    max_iters: usize,
    tol: f64,
) -> (Vec<f64>, f64, usize) {
    let mut x = x0;
    let (mut loss, mut grad) = eval(&x);
    let mut step = lr;
    let mut iters = 0;
    while iters < max_iters && loss > tol && step > 1e-12 {
        let cand: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi - step * gi).collect();
        let (l2, g2) = eval(&cand);
        iters += 1;
        if l2 < loss {
            x = cand;
            loss = l2;
            grad = g2;
            step *= 1.25;
        } else {
            step *= 0.5;
        }
    }
    (x, loss, iters)
}

fn set_angles(gates: &mut [Gate], thetas: &[f64]) {
    let mut it = thetas.iter();
    for g in gates.iter_mut() {
        if let Some(t) = g.theta_mut() {
            *t = *it.next().expect("angle count matches");
        }
    }
}

/// Optimize the angles of `p` so that `r > p` peaks at `s`.
///
/// Each restart resamples the starting angles; training stops early as soon
/// as the target peak weight is reached, and fails if every restart stays
/// below `delta_min`.
pub fn train_patch(
    r: &Circuit,
    p: &Circuit,
    s: &BitString,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> ForgeResult<TrainOutcome> {
    let n = r.n_qubits;
    let psi_r = simulate(r, &BitString::zeros(n))?;
    let param_count = p.angles().len();

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut total_iters = 0;
    let mut restarts_used = 0;

    for restart in 0..cfg.restarts.max(1) {
        restarts_used = restart + 1;
        let mut gates = p.gates.clone();
        let init: Vec<f64> = if restart == 0 {
            p.angles()
        } else {
            (0..param_count)
                .map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
                .collect()
        };
        let mut eval = |x: &[f64]| {
            set_angles(&mut gates, x);
            let (delta, grad) = peak_objective(n, &psi_r, &gates, s);
            // minimize 1 - delta; gradient flips sign
            (1.0 - delta, grad.into_iter().map(|g| -g).collect())
        };
        let (x, loss, iters) =
            adaptive_minimize(&mut eval, init, cfg.learning_rate, cfg.max_iters, 1.0 - cfg.delta_target);
        total_iters += iters;
        let delta = 1.0 - loss;
        if best.as_ref().is_none_or(|(_, d)| delta > *d) {
            best = Some((x, delta));
        }
        if delta >= cfg.delta_target {
            break;
        }
    }

    let (x, delta) = best.expect("at least one restart ran");
    if delta < cfg.delta_min {
        return Err(ForgeError::TrainingStagnated { best_delta: delta, floor: cfg.delta_min });
    }
    let mut trained = p.clone();
    set_angles(&mut trained.gates, &x);
    Ok(TrainOutcome { p: trained, delta, iterations: total_iters, restarts_used })
}

/// `P` that mirrors `R`: its exact inverse, padded to `p_rzz` entangling
/// gates with zero-angle brickwork, followed by a bit-flip layer mapping
/// `0^n` to `s`. Gives peak weight 1 before any training.
pub fn mirror_patch(r: &Circuit, p_rzz: usize, s: &BitString, rng: &mut ChaCha8Rng) -> Circuit {
    let mut p = r.invert();
    let r_rzz = r.rzz_count();
    if p_rzz > r_rzz {
        let mut extra = brickwork(r.n_qubits, p_rzz - r_rzz, rng);
        for g in extra.gates.iter_mut() {
            if let Some(t) = g.theta_mut() {
                *t = 0.0;
            }
        }
        p.gates.extend(extra.gates);
    }
    for i in 0..r.n_qubits {
        if s.bit(i) == 1 {
            p.gates.push(Gate::Rx { q: i, theta: std::f64::consts::PI });
        }
    }
    p
}

/// Build the initial `P` for a recipe: either a fresh random brickwork or the
/// mirror of `R`.
pub fn initial_patch(
    recipe: &HqapRecipe,
    r: &Circuit,
    s: &BitString,
    rng: &mut ChaCha8Rng,
) -> Circuit {
    match recipe.p_structure {
        PStructure::Random => brickwork(recipe.n_qubits, recipe.p_rzz, rng),
        PStructure::Mirror => mirror_patch(r, recipe.p_rzz, s, rng),
    }
}

#[derive(Debug, Clone)]
pub struct TrainedPair {
    pub r: Circuit,
    pub p: Circuit,
    pub delta: f64,
    pub iterations: usize,
    pub restarts_used: usize,
}

/// Generate a seeded random brickwork `R` of `r_rzz` entangling gates and
/// train a patch `P` of `p_rzz` entangling gates so `R > P` peaks at `s`.
pub fn train_shallow_peaked(
    n: usize,
    r_rzz: usize,
    p_rzz: usize,
    s: &BitString,
    structure: PStructure,
    cfg: &TrainConfig,
    seed: u64,
) -> ForgeResult<TrainedPair> {
    if s.len() != n {
        return Err(ForgeError::BadRecipe(format!(
            "target has {} bits, circuit has {n} qubits",
            s.len()
        )));
    }
    if structure == PStructure::Mirror && p_rzz < r_rzz {
        return Err(ForgeError::BadRecipe("mirror structure needs p_rzz >= r_rzz".to_string()));
    }
    let mut structure_rng = ChaCha8Rng::seed_from_u64(seed);
    let r = brickwork(n, r_rzz, &mut structure_rng);
    let p0 = match structure {
        PStructure::Random => brickwork(n, p_rzz, &mut structure_rng),
        PStructure::Mirror => mirror_patch(&r, p_rzz, s, &mut structure_rng),
    };
    let mut train_rng = ChaCha8Rng::seed_from_u64(seed);
    train_rng.set_stream(1);
    let out = train_patch(&r, &p0, s, cfg, &mut train_rng)?;
    Ok(TrainedPair {
        r,
        p: out.p,
        delta: out.delta,
        iterations: out.iterations,
        restarts_used: out.restarts_used,
    })
}

// ---------------------------------------------------------------------------
// Identity insertion
// ---------------------------------------------------------------------------

/// Insert a seeded random identity block `U > U^dag` of `u_rzz` entangling
/// gates between `r` and `p`. Returns the assembled circuit and `U` itself.
pub fn insert_identity(
    r: &Circuit,
    p: &Circuit,
    u_rzz: usize,
    seed: u64,
) -> ForgeResult<(Circuit, Circuit)> {
    let u = brickwork(r.n_qubits, u_rzz, &mut ChaCha8Rng::seed_from_u64(seed));
    let rp = r.then(p)?;
    let c = insert_identity_at(&rp, r.len(), &u)?;
    Ok((c, u))
}

/// Splice `u > u^dag` into `c` at gate index `at`. The circuit's action is
/// unchanged; the gate count grows by `2 * u.len()`.
pub fn insert_identity_at(c: &Circuit, at: usize, u: &Circuit) -> ForgeResult<Circuit> {
    if at > c.len() {
        return Err(ForgeError::BadRecipe(format!(
            "insertion index {at} out of bounds for {} gates",
            c.len()
        )));
    }
    if u.n_qubits != c.n_qubits {
        return Err(ForgeError::Circuit(CircuitError::ComposeMismatch {
            left: c.n_qubits,
            right: u.n_qubits,
        }));
    }
    let mut gates = Vec::with_capacity(c.len() + 2 * u.len());
    gates.extend(c.gates[..at].iter().cloned());
    gates.extend(u.gates.iter().cloned());
    gates.extend(u.invert().gates);
    gates.extend(c.gates[at..].iter().cloned());
    Ok(Circuit { n_qubits: c.n_qubits, gates, meta: c.meta.clone() })
}

// ---------------------------------------------------------------------------
// Sweeping
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub final_loss: f64,
    pub max_drift: f64,
    pub resamples_used: usize,
}

/// Kick the window's angles by `U(-kick, kick)` and retrain them against the
/// window's original unitary until the trace-fidelity loss drops below
/// `eps`. The gate structure is untouched. If the retrained angles all land
/// within `kick/10` of their originals the kick is resampled (bounded
/// retries); a zero kick is accepted immediately with zero loss.
pub fn sweep_patch(
    c: &mut Circuit,
    w: &PatchWindow,
    kick: f64,
    eps: f64,
    max_iters: usize,
    rng: &mut ChaCha8Rng,
) -> ForgeResult<SweepOutcome> {
    const RESAMPLES: usize = 4;
    let target = patch_unitary(c, w)?;
    let local: Vec<Gate> = c.gates[w.start..w.end].iter().map(|g| w.localize(g)).collect();
    let original: Vec<f64> = local.iter().filter_map(|g| g.theta()).collect();
    if original.is_empty() {
        return Ok(SweepOutcome { final_loss: 0.0, max_drift: 0.0, resamples_used: 0 });
    }
    let k = w.n_qubits();

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut resamples_used = 0;
    for attempt in 0..=RESAMPLES {
        resamples_used = attempt;
        let init: Vec<f64> = original
            .iter()
            .map(|t| t + if kick > 0.0 { rng.gen_range(-kick..kick) } else { 0.0 })
            .collect();
        let mut gates = local.clone();
        let mut eval = |x: &[f64]| {
            set_angles(&mut gates, x);
            trace_loss_and_gradient(k, &target, &gates).expect("window gates have generators")
        };
        // stop once safely inside the budget: optimizing to machine precision
        // would walk the angles straight back to their originals
        let (x, loss, _) = adaptive_minimize(&mut eval, init, 0.1, max_iters, eps * 0.25);
        if best.as_ref().is_none_or(|(_, l)| loss < *l) {
            best = Some((x.clone(), loss));
        }
        if loss <= eps {
            let drift =
                x.iter().zip(&original).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if kick == 0.0 || drift > kick / 10.0 || attempt == RESAMPLES {
                write_window_angles(c, w, &x);
                return Ok(SweepOutcome { final_loss: loss, max_drift: drift, resamples_used });
            }
        }
    }

    let (x, loss) = best.expect("at least one attempt ran");
    if loss <= eps {
        let drift = x.iter().zip(&original).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        write_window_angles(c, w, &x);
        return Ok(SweepOutcome { final_loss: loss, max_drift: drift, resamples_used });
    }
    Err(ForgeError::SweepFailed { start: w.start, end: w.end, eps, loss })
}

fn write_window_angles(c: &mut Circuit, w: &PatchWindow, thetas: &[f64]) {
    set_angles(&mut c.gates[w.start..w.end], thetas);
}

/// Sliding sweep windows over `0..region_end`: starts every `window_gates/2`
/// gates, each extended while the union support stays within `max_qubits`.
pub fn select_sweep_windows(
    c: &Circuit,
    region_end: usize,
    window_gates: usize,
    max_qubits: usize,
) -> Vec<PatchWindow> {
    let stride = (window_gates / 2).max(1);
    let mut windows = Vec::new();
    let mut start = 0;
    while start < region_end.min(c.len()) {
        let mut qubits: Vec<usize> = Vec::new();
        let mut end = start;
        while end < region_end && end - start < window_gates {
            let mut extended = qubits.clone();
            for q in c.gates[end].qubits() {
                if !extended.contains(&q) {
                    extended.push(q);
                }
            }
            if extended.len() > max_qubits {
                break;
            }
            qubits = extended;
            end += 1;
        }
        if end > start && c.gates[start..end].iter().any(|g| g.theta().is_some()) {
            qubits.sort_unstable();
            windows.push(PatchWindow { start, end, qubits });
        }
        start += stride;
    }
    windows
}

// ---------------------------------------------------------------------------
// Masking
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskOutcome {
    pub final_loss: f64,
    pub old_gates: usize,
    pub new_gates: usize,
    pub parameters: usize,
}

/// Dense single-qubit rotation chain `RZ RX RZ` (full Euler coverage).
fn euler_chain(q: usize, rng: &mut ChaCha8Rng) -> Vec<Gate> {
    let mut a = || rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    vec![
        Gate::Rz { q, theta: a() },
        Gate::Rx { q, theta: a() },
        Gate::Rz { q, theta: a() },
    ]
}

/// Fresh window structure for masking: `layers` rounds of Euler chains plus
/// an `RZZ` per random pair, and a trailing Euler chain per qubit.
fn mask_ansatz(k: usize, layers: usize, rng: &mut ChaCha8Rng) -> Vec<Gate> {
    use rand::seq::SliceRandom;
    let mut gates = Vec::new();
    for _ in 0..layers {
        let mut order: Vec<usize> = (0..k).collect();
        order.shuffle(rng);
        for pair in order.chunks(2) {
            if let [a, b] = *pair {
                gates.extend(euler_chain(a, rng));
                gates.extend(euler_chain(b, rng));
                gates.push(Gate::Rzz { a, b, theta: rng.gen_range(-1.0..1.0) });
            } else if let [q] = *pair {
                gates.extend(euler_chain(q, rng));
            }
        }
    }
    for q in 0..k {
        gates.extend(euler_chain(q, rng));
    }
    gates
}

/// Replace the window with a different trained gate structure implementing
/// the same unitary to within `eps`, and return the new circuit length
/// delta. The replacement has at least as many parameters as the original.
pub fn mask_patch(
    c: &mut Circuit,
    w: &PatchWindow,
    min_layers: usize,
    eps: f64,
    max_iters: usize,
    restarts: usize,
    rng: &mut ChaCha8Rng,
) -> ForgeResult<MaskOutcome> {
    let target = patch_unitary(c, w)?;
    let k = w.n_qubits();
    let original_params = c.gates[w.start..w.end]
        .iter()
        .filter(|g| g.theta().is_some())
        .count();

    // grow layers until the parameter count can match the original
    let params_per_layer = 3 * k + k / 2; // euler chains + rzz per pair
    let mut layers = min_layers.max(1);
    while 3 * k + layers * params_per_layer < original_params {
        layers += 1;
    }

    let mut best: Option<(Vec<Gate>, Vec<f64>, f64)> = None;
    for restart in 0..restarts.max(1) {
        // deepen the ansatz on later restarts: extra parameters flatten the
        // landscape and sidestep local minima near (but above) the budget
        let structure = mask_ansatz(k, layers + restart / 2, rng);
        let n_params = structure.iter().filter(|g| g.theta().is_some()).count();
        let init: Vec<f64> = structure.iter().filter_map(|g| g.theta()).collect();
        debug_assert_eq!(init.len(), n_params);
        let mut gates = structure.clone();
        let mut eval = |x: &[f64]| {
            set_angles(&mut gates, x);
            trace_loss_and_gradient(k, &target, &gates).expect("mask gates have generators")
        };
        let (x, loss, _) = adaptive_minimize(&mut eval, init, 0.1, max_iters, 1e-10);
        if best.as_ref().is_none_or(|(_, _, l)| loss < *l) {
            best = Some((structure, x, loss));
        }
        if best.as_ref().is_some_and(|(_, _, l)| *l <= eps) {
            break;
        }
    }

    let (structure, x, loss) = best.expect("at least one restart ran");
    if loss > eps {
        return Err(ForgeError::MaskFailed { start: w.start, end: w.end, eps, loss });
    }
    let mut new_local = structure;
    set_angles(&mut new_local, &x);
    let parameters = new_local.iter().filter(|g| g.theta().is_some()).count();
    // relabel local qubits back into circuit qubits
    let unlocal: Vec<Gate> = new_local.iter().map(|g| g.relabel(|q| w.qubits[q])).collect();
    let old_gates = w.end - w.start;
    let new_gates = unlocal.len();
    c.gates.splice(w.start..w.end, unlocal);
    Ok(MaskOutcome { final_loss: loss, old_gates, new_gates, parameters })
}

/// Maximal runs of consecutive gates supported on at most two qubits, with
/// at least one rotation angle: the natural masking candidates.
pub fn select_mask_windows(c: &Circuit, region_end: usize) -> Vec<PatchWindow> {
    let mut windows = Vec::new();
    let mut start = 0;
    let limit = region_end.min(c.len());
    while start < limit {
        let mut qubits: Vec<usize> = Vec::new();
        let mut end = start;
        while end < limit {
            let mut extended = qubits.clone();
            for q in c.gates[end].qubits() {
                if !extended.contains(&q) {
                    extended.push(q);
                }
            }
            if extended.len() > 2 {
                break;
            }
            qubits = extended;
            end += 1;
        }
        if end > start && c.gates[start..end].iter().any(|g| g.theta().is_some()) {
            qubits.sort_unstable();
            windows.push(PatchWindow { start, end, qubits });
            start = end;
        } else {
            start += 1;
        }
    }
    windows
}

// ---------------------------------------------------------------------------
// Swap conjugation
// ---------------------------------------------------------------------------

/// Wrap `count` random segments within `0..region_end` in SWAP-conjugations:
/// pick a transposition `(i j)` and cut positions `c1 < c2`, insert the swap
/// at both cuts and relabel the segment between them. Each conjugation is an
/// exact identity. Afterwards any leading swaps (which act trivially on the
/// all-zeros input) are deleted.
pub fn apply_swap_transformations(
    c: &Circuit,
    count: usize,
    region_end: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> ForgeResult<Circuit> {
    let n = c.n_qubits;
    if n < 2 {
        return Err(ForgeError::BadRecipe("need at least 2 qubits to swap".to_string()));
    }
    let mut gates = c.gates.clone();
    let mut region = region_end.unwrap_or(gates.len()).min(gates.len());

    for _ in 0..count {
        let i = rng.gen_range(0..n);
        let j = loop {
            let j = rng.gen_range(0..n);
            if j != i {
                break j;
            }
        };
        let c1 = rng.gen_range(0..=region);
        let c2 = loop {
            let c2 = rng.gen_range(0..=region);
            if c2 != c1 {
                break c2;
            }
        };
        let (c1, c2) = (c1.min(c2), c1.max(c2));
        let tau = |q: usize| if q == i { j } else if q == j { i } else { q };
        let mut rebuilt = Vec::with_capacity(gates.len() + 2);
        rebuilt.extend(gates[..c1].iter().cloned());
        rebuilt.push(Gate::Swap { a: i, b: j });
        rebuilt.extend(gates[c1..c2].iter().map(|g| g.relabel(tau)));
        rebuilt.push(Gate::Swap { a: i, b: j });
        rebuilt.extend(gates[c2..].iter().cloned());
        gates = rebuilt;
        region += 2;
    }

    // leading swaps act trivially on |0..0>
    let mut lead = 0;
    while lead < gates.len() && matches!(gates[lead], Gate::Swap { .. }) {
        lead += 1;
    }
    gates.drain(..lead);

    Ok(Circuit { n_qubits: n, gates, meta: c.meta.clone() })
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ForgeOutput {
    pub circuit: Circuit,
    pub certificate: PeakCertificate,
    /// Training diagnostics.
    pub train_iterations: usize,
    pub train_restarts: usize,
}

/// Run the full forge pipeline for a recipe:
/// train, insert the identity block, sweep, mask, swap-conjugate, verify.
pub fn forge_hqap(recipe: &HqapRecipe) -> ForgeResult<ForgeOutput> {
    recipe.validate()?;
    let n = recipe.n_qubits;

    // target bitstring
    let s = if recipe.target == "random" {
        let mut rng = recipe.rng(1);
        BitString::from_bits((0..n).map(|_| rng.gen_range(0..2u8)).collect())
    } else {
        BitString::parse(&recipe.target).expect("validated target")
    };

    // structure + training
    let mut structure_rng = recipe.rng(0);
    let r = brickwork(n, recipe.r_rzz, &mut structure_rng);
    let p0 = initial_patch(recipe, &r, &s, &mut structure_rng);
    let trained = train_patch(&r, &p0, &s, &recipe.train, &mut recipe.rng(2))?;
    let mut stage_deltas = vec![("trained".to_string(), trained.delta)];

    // identity block between R and P
    let u = brickwork(n, recipe.u_rzz, &mut recipe.rng(3));
    let rp = r.then(&trained.p)?;
    let mut circuit = insert_identity_at(&rp, r.len(), &u)?;
    let mut region_end = r.len() + u.len();
    if recipe.scramble_suffix {
        region_end = circuit.len();
    }
    stage_deltas.push(("inserted".to_string(), peak_weight(&circuit, &s)?));

    // sweeping
    let mut sweep_rng = recipe.rng(4);
    for _ in 0..recipe.sweep_rounds {
        let windows =
            select_sweep_windows(&circuit, region_end, recipe.window_gates, recipe.window_qubits);
        for w in &windows {
            sweep_patch(&mut circuit, w, recipe.kick, recipe.eps_patch, 400, &mut sweep_rng)?;
        }
    }
    stage_deltas.push(("swept".to_string(), peak_weight(&circuit, &s)?));

    // masking
    let mut mask_rng = recipe.rng(5);
    if recipe.masks > 0 {
        let mut candidates = select_mask_windows(&circuit, region_end);
        let mut shift: isize = 0;
        let chosen: Vec<usize> = pick_distinct(candidates.len(), recipe.masks, &mut mask_rng);
        let mut chosen_sorted = chosen;
        chosen_sorted.sort_unstable();
        for idx in chosen_sorted {
            let w = &mut candidates[idx];
            let adj = PatchWindow {
                start: (w.start as isize + shift) as usize,
                end: (w.end as isize + shift) as usize,
                qubits: w.qubits.clone(),
            };
            let out = mask_patch(&mut circuit, &adj, 3, recipe.eps_patch, 1500, 6, &mut mask_rng)?;
            shift += out.new_gates as isize - out.old_gates as isize;
        }
        region_end = (region_end as isize + shift) as usize;
    }
    stage_deltas.push(("masked".to_string(), peak_weight(&circuit, &s)?));

    // swap conjugation
    circuit =
        apply_swap_transformations(&circuit, recipe.swaps, Some(region_end), &mut recipe.rng(6))?;
    let delta = peak_weight(&circuit, &s)?;
    stage_deltas.push(("swapped".to_string(), delta));

    let certificate = PeakCertificate {
        version: 1,
        bitstring: s,
        delta,
        stage_deltas,
        recipe_sha256: recipe.sha256(),
        seed: recipe.seed,
    };
    Ok(ForgeOutput {
        circuit,
        certificate,
        train_iterations: trained.iterations,
        train_restarts: trained.restarts_used,
    })
}

/// Deterministically pick up to `k` distinct indices out of `0..len`.
fn pick_distinct(len: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut all: Vec<usize> = (0..len).collect();
    all.shuffle(rng);
    all.truncate(k);
    all
}

// ---------------------------------------------------------------------------
// Angle drift statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftStats {
    pub mean_abs: f64,
    pub max_abs: f64,
    /// 16 fixed bins of width pi/8; drifts beyond 2*pi clamp into the last.
    pub histogram: Vec<usize>,
    /// Pearson correlation between the transformed circuit's first-half
    /// angles and its negated, reversed second-half angles. A pristine
    /// `U > U^dag` block scores 1.
    pub mirror_correlation: f64,
}

/// Compare per-gate angles of two structurally identical circuits.
pub fn angle_drift_stats(original: &Circuit, transformed: &Circuit) -> ForgeResult<DriftStats> {
    if original.len() != transformed.len() {
        return Err(ForgeError::StructureMismatch {
            index: original.len().min(transformed.len()),
            left: format!("{} gates", original.len()),
            right: format!("{} gates", transformed.len()),
        });
    }
    for (index, (a, b)) in original.gates.iter().zip(&transformed.gates).enumerate() {
        let same_kind = a.name() == b.name() && {
            let mut qa = a.qubits();
            let mut qb = b.qubits();
            qa.sort_unstable();
            qb.sort_unstable();
            qa == qb
        };
        if !same_kind {
            return Err(ForgeError::StructureMismatch {
                index,
                left: a.name().to_string(),
                right: b.name().to_string(),
            });
        }
    }

    let orig = original.angles();
    let trans = transformed.angles();
    let drifts: Vec<f64> = orig.iter().zip(&trans).map(|(a, b)| (a - b).abs()).collect();
    let mean_abs = if drifts.is_empty() {
        0.0
    } else {
        drifts.iter().sum::<f64>() / drifts.len() as f64
    };
    let max_abs = drifts.iter().copied().fold(0.0, f64::max);
    let mut histogram = vec![0usize; 16];
    let bin_w = std::f64::consts::PI / 8.0;
    for d in &drifts {
        let bin = ((d / bin_w) as usize).min(15);
        histogram[bin] += 1;
    }

    let m = trans.len() / 2;
    let first = &trans[..m];
    let second: Vec<f64> = trans[trans.len() - m..].iter().rev().map(|t| -t).collect();
    let mirror_correlation = pearson(first, &second);

    Ok(DriftStats { mean_abs, max_abs, histogram, mirror_correlation })
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va <= 1e-30 || vb <= 1e-30 {
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statevector::find_peak;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn brickwork_hits_requested_rzz_count() {
        for n in [4usize, 5, 9] {
            let c = brickwork(n, 17, &mut rng(1));
            assert_eq!(c.rzz_count(), 17);
            c.validate().unwrap();
        }
    }

    #[test]
    fn mirror_patch_gives_unit_peak_without_training() {
        let recipe = HqapRecipe {
            version: 1,
            n_qubits: 6,
            target: "101010".to_string(),
            r_rzz: 9,
            p_rzz: 12,
            u_rzz: 0,
            p_structure: PStructure::Mirror,
            window_gates: 10,
            window_qubits: 4,
            sweep_rounds: 0,
            kick: 0.3,
            masks: 0,
            swaps: 0,
            eps_patch: 1e-4,
            train: TrainConfig::default(),
            scramble_suffix: false,
            seed: 5,
        };
        let mut structure_rng = recipe.rng(0);
        let r = brickwork(6, 9, &mut structure_rng);
        let s = BitString::parse("101010").unwrap();
        let p = initial_patch(&recipe, &r, &s, &mut structure_rng);
        let rp = r.then(&p).unwrap();
        let w = peak_weight(&rp, &s).unwrap();
        assert!((w - 1.0).abs() < 1e-6, "mirror peak weight {w}");
    }

    #[test]
    fn training_maps_zero_to_target_without_r() {
        // r depth 0: P alone must map |0000> to |s>
        let s = BitString::parse("1011").unwrap();
        let cfg = TrainConfig {
            delta_target: 0.999,
            delta_min: 0.9,
            max_iters: 3000,
            ..TrainConfig::default()
        };
        let out = train_shallow_peaked(4, 0, 4, &s, PStructure::Random, &cfg, 7).unwrap();
        assert!(out.delta >= 0.99, "delta {}", out.delta);
        assert!(out.r.is_empty());
        let rp = out.r.then(&out.p).unwrap();
        let (peak, _) = find_peak(&rp).unwrap();
        assert_eq!(peak, s);
    }

    #[test]
    fn mirror_training_unit_peak_via_public_api() {
        let s = BitString::parse("110010").unwrap();
        let cfg = TrainConfig { delta_target: 1.0 - 1e-9, ..TrainConfig::default() };
        let out = train_shallow_peaked(6, 8, 10, &s, PStructure::Mirror, &cfg, 3).unwrap();
        assert!(out.delta >= 0.999, "delta {}", out.delta);
    }

    #[test]
    fn peak_objective_gradient_matches_finite_difference() {
        use crate::statevector::finite_difference_gradient;
        let r = brickwork(4, 4, &mut rng(3));
        let p = brickwork(4, 3, &mut rng(4));
        let s = BitString::parse("0110").unwrap();
        let psi_r = simulate(&r, &BitString::zeros(4)).unwrap();
        let thetas = p.angles();
        let (_, grad) = peak_objective(4, &psi_r, &p.gates, &s);
        let mut f = |x: &[f64]| {
            let mut gates = p.gates.clone();
            set_angles(&mut gates, x);
            let mut phi = psi_r.clone();
            for g in &gates {
                phi.apply_gate(g);
            }
            phi.amplitude(&s).norm_sqr()
        };
        let fd = finite_difference_gradient(&mut f, &thetas, 1e-5);
        for (a, b) in grad.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-7, "adjoint {a} vs fd {b}");
        }
    }

    #[test]
    fn insert_identity_preserves_state() {
        let r = brickwork(5, 3, &mut rng(10));
        let p = brickwork(5, 3, &mut rng(12));
        let rp = r.then(&p).unwrap();
        let (with_id, u) = insert_identity(&r, &p, 8, 11).unwrap();
        assert_eq!(u.rzz_count(), 8);
        assert_eq!(with_id.len(), rp.len() + 2 * u.len());
        assert_eq!(with_id.rzz_count(), rp.rzz_count() + 2 * u.rzz_count());
        let a = simulate(&rp, &BitString::zeros(5)).unwrap();
        let b = simulate(&with_id, &BitString::zeros(5)).unwrap();
        assert!((a.inner(&b).norm() - 1.0).abs() < 1e-10);
        // depth zero leaves the circuit unchanged
        let (same, empty_u) = insert_identity(&r, &p, 0, 11).unwrap();
        assert!(empty_u.is_empty());
        assert_eq!(same.gates, rp.gates);
    }

    #[test]
    fn single_rz_window_sweeps_back_to_original() {
        let theta = 0.77;
        let mut c = Circuit::with_gates(2, vec![Gate::Rz { q: 0, theta }]).unwrap();
        let w = PatchWindow::from_range(&c, 0, 1).unwrap();
        let out = sweep_patch(&mut c, &w, 0.3, 1e-4, 400, &mut rng(2)).unwrap();
        let new_theta = c.gates[0].theta().unwrap();
        let wrapped = (new_theta - theta).rem_euclid(2.0 * std::f64::consts::PI);
        let dist = wrapped.min(2.0 * std::f64::consts::PI - wrapped);
        assert!(dist < 0.05, "swept angle {new_theta} vs original {theta}");
        assert!(out.final_loss <= 1e-4);
    }

    #[test]
    fn zero_kick_sweep_is_a_no_op() {
        let mut c = brickwork(4, 4, &mut rng(21));
        let before = c.angles();
        let w = select_sweep_windows(&c, c.len(), 8, 4).into_iter().next().unwrap();
        let out = sweep_patch(&mut c, &w, 0.0, 1e-4, 200, &mut rng(22)).unwrap();
        assert_eq!(c.angles(), before);
        assert!(out.final_loss < 1e-12);
    }

    #[test]
    fn sweep_preserves_window_unitary_and_moves_angles() {
        let mut c = brickwork(5, 10, &mut rng(30));
        let w = select_sweep_windows(&c, c.len(), 10, 4).into_iter().next().unwrap();
        let before_u = patch_unitary(&c, &w).unwrap();
        let before_angles = c.angles();
        let out = sweep_patch(&mut c, &w, 0.3, 1e-4, 500, &mut rng(31)).unwrap();
        let after_u = patch_unitary(&c, &w).unwrap();
        assert!(crate::patch::trace_fidelity_loss(&before_u, &after_u) <= 1e-4);
        // shallow windows have few flat directions, so the drift may be small,
        // but the angles must not have snapped back exactly
        assert!(out.max_drift > 1e-4, "drift {}", out.max_drift);
        assert_ne!(before_angles, c.angles());
    }

    #[test]
    fn mask_two_qubit_window_reaches_budget() {
        let mut c = brickwork(2, 2, &mut rng(40));
        let w = PatchWindow::from_range(&c, 0, c.len()).unwrap();
        let before = simulate(&c, &BitString::zeros(2)).unwrap();
        let out = mask_patch(&mut c, &w, 3, 1e-4, 800, 3, &mut rng(41)).unwrap();
        assert!(out.final_loss <= 1e-4, "loss {}", out.final_loss);
        assert!(out.parameters >= 10);
        let after = simulate(&c, &BitString::zeros(2)).unwrap();
        assert!((before.inner(&after).norm() - 1.0).abs() < 2e-4);
    }

    #[test]
    fn mask_identity_window() {
        let mut c = Circuit::new(2);
        let w = PatchWindow::with_subset(&c, 0, 0, vec![0]).unwrap();
        let out = mask_patch(&mut c, &w, 1, 1e-4, 400, 3, &mut rng(50)).unwrap();
        assert!(out.final_loss <= 1e-4);
        assert!(!c.is_empty());
        let sv = simulate(&c, &BitString::zeros(2)).unwrap();
        assert!(sv.amplitude(&BitString::zeros(2)).norm() > 1.0 - 1e-3);
    }

    #[test]
    fn swap_transformations_are_exact() {
        let c = brickwork(6, 12, &mut rng(60));
        let before = simulate(&c, &BitString::zeros(6)).unwrap();
        let out = apply_swap_transformations(&c, 6, None, &mut rng(61)).unwrap();
        assert!(!matches!(out.gates.first(), Some(Gate::Swap { .. })));
        let after = simulate(&out, &BitString::zeros(6)).unwrap();
        let overlap = before.inner(&after).norm();
        assert!((overlap - 1.0).abs() < 1e-10, "overlap {overlap}");
    }

    #[test]
    fn drift_stats_on_pristine_identity_block() {
        let u = brickwork(5, 8, &mut rng(70));
        let block = u.then(&u.invert()).unwrap();
        let stats = angle_drift_stats(&block, &block).unwrap();
        assert_eq!(stats.mean_abs, 0.0);
        assert_eq!(stats.max_abs, 0.0);
        assert!((stats.mirror_correlation - 1.0).abs() < 1e-12);
        assert_eq!(stats.histogram[0], block.angles().len());
    }

    #[test]
    fn drift_stats_rejects_different_structure() {
        let a = brickwork(4, 4, &mut rng(80));
        let b = brickwork(4, 5, &mut rng(81));
        assert!(matches!(
            angle_drift_stats(&a, &b),
            Err(ForgeError::StructureMismatch { .. })
        ));
    }

    #[test]
    fn recipe_round_trip_and_validation() {
        let r = HqapRecipe {
            version: 1,
            n_qubits: 8,
            target: "random".to_string(),
            r_rzz: 8,
            p_rzz: 8,
            u_rzz: 12,
            p_structure: PStructure::Random,
            window_gates: 10,
            window_qubits: 4,
            sweep_rounds: 2,
            kick: 0.3,
            masks: 2,
            swaps: 4,
            eps_patch: 1e-4,
            train: TrainConfig::default(),
            scramble_suffix: false,
            seed: 99,
        };
        let back = HqapRecipe::from_json(&r.to_json()).unwrap();
        assert_eq!(r, back);

        let mut bad = r.clone();
        bad.target = "0101".to_string();
        assert!(bad.validate().is_err());
        let mut bad = r.clone();
        bad.p_structure = PStructure::Mirror;
        bad.p_rzz = 4;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn forge_small_end_to_end() {
        let recipe = HqapRecipe {
            version: 1,
            n_qubits: 6,
            target: "random".to_string(),
            r_rzz: 6,
            p_rzz: 9,
            u_rzz: 10,
            p_structure: PStructure::Random,
            window_gates: 10,
            window_qubits: 4,
            sweep_rounds: 2,
            kick: 0.3,
            masks: 2,
            swaps: 5,
            eps_patch: 1e-4,
            train: TrainConfig { delta_target: 0.2, delta_min: 0.1, ..TrainConfig::default() },
            scramble_suffix: false,
            seed: 1234,
        };
        let out = forge_hqap(&recipe).unwrap();
        let verified = peak_weight(&out.circuit, &out.certificate.bitstring).unwrap();
        assert!((verified - out.certificate.delta).abs() < 1e-12);
        assert!(out.certificate.delta >= 0.1, "delta {}", out.certificate.delta);
        // obfuscation kept the peak within the trained stage's neighborhood
        let trained = out.certificate.stage_deltas[0].1;
        assert!((trained - out.certificate.delta).abs() < 0.05);
        // first gate is never a swap
        assert!(!matches!(out.circuit.gates.first(), Some(Gate::Swap { .. })));
    }
}
