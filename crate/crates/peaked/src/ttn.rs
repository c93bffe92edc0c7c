//! Tree tensor-network attack: transpile a circuit onto a fixed tree
//! topology, evolve it with a bond-truncated simple update, read out single
//! qubit marginals with belief propagation (exact on trees), and run the
//! greedy conditional bit-fixing attack.
//!
//! The topology is a root with three balanced binary subtrees hanging off
//! it, so every qubit sits within O(log n) hops of every other while no node
//! has more than four neighbors. The state lives in the Vidal gauge: one
//! tensor per node (physical leg first, then one leg per tree edge in sorted
//! neighbor order) and a vector of positive singular weights per edge.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::{bits_from_z, recovery_fraction};
use crate::bits::BitString;
use crate::circuit::{Circuit, Gate};
use crate::mps::{gate_1q_matrix, gate_2q_matrix};
use crate::statevector::StateVector;
use crate::tensor::{
    inverse_permutation, svd_truncate, thin_lq, thin_qr, NdTensor, TensorError, TruncationPolicy,
};

/// Smallest system the three-subtree layout supports.
pub const MIN_TREE_QUBITS: usize = 4;
/// Largest system `TtnState::to_statevector` will densify.
pub const MAX_DENSE_TREE_QUBITS: usize = 16;

/// Singular values at or below this are treated as numerical noise. Keeping
/// them would inflate bonds on product states and make the gauge restore
/// step divide by near-zero weights.
const TTN_CUTOFF: f64 = 1e-12;
const BP_TOL: f64 = 1e-12;
const BP_MAX_SWEEPS: usize = 50;

pub type TtnResult<T> = Result<T, TtnError>;

#[derive(Debug, Error)]
pub enum TtnError {
    #[error("tree topology needs at least {MIN_TREE_QUBITS} qubits, got {n}")]
    TooFewQubits { n: usize },
    #[error("circuit has {circuit} qubits but the topology has {topology} nodes")]
    TopologyMismatch { circuit: usize, topology: usize },
    #[error("gate {name} is not supported on the tree network")]
    UnsupportedGate { name: &'static str },
    #[error("two-qubit gate on ({a}, {b}) does not act on a tree edge")]
    NotTreeLocal { a: usize, b: usize },
    #[error("{n} qubits is too large to densify (max {MAX_DENSE_TREE_QUBITS})")]
    TooLarge { n: usize },
    #[error("projection of node {node} onto bit {bit} lands on a zero-probability branch")]
    ZeroProbabilityBranch { node: usize, bit: u8 },
    #[error("belief propagation did not converge (residual {residual:.3e} after {sweeps} sweeps)")]
    NoConvergence { residual: f64, sweeps: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

// ---------------------------------------------------------------------------
// Topology
// ---------------------------------------------------------------------------

/// A tree on `n` nodes: node 0 is the root, with three balanced binary
/// subtrees below it whose sizes differ by at most one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeTopology {
    n: usize,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
    depth: Vec<usize>,
}

/// Deterministic balanced construction: the `n - 1` non-root nodes are split
/// into three contiguous blocks (sizes differing by at most one), and each
/// block forms a complete binary tree in level order.
pub fn build_tree_topology(n: usize) -> TtnResult<TreeTopology> {
    if n < MIN_TREE_QUBITS {
        return Err(TtnError::TooFewQubits { n });
    }
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let rest = n - 1;
    let base = rest / 3;
    let extra = rest % 3;
    let mut start = 1;
    for t in 0..3 {
        let size = base + usize::from(t < extra);
        for i in 0..size {
            parent[start + i] = Some(if i == 0 { 0 } else { start + (i - 1) / 2 });
        }
        start += size;
    }

    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for v in 1..n {
        children[parent[v].unwrap()].push(v);
    }
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for v in 0..n {
        if let Some(p) = parent[v] {
            neighbors[v].push(p);
        }
        neighbors[v].extend(&children[v]);
        neighbors[v].sort_unstable();
    }
    let mut depth = vec![0usize; n];
    for v in 1..n {
        // parents always have smaller indices, so a single pass suffices
        depth[v] = depth[parent[v].unwrap()] + 1;
    }
    Ok(TreeTopology { n, parent, children, neighbors, depth })
}

impl TreeTopology {
    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    /// All edges as `(min, max)` pairs in sorted order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> =
            (1..self.n).map(|v| canonical_edge(v, self.parent[v].unwrap())).collect();
        out.sort_unstable();
        out
    }

    pub fn are_adjacent(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }

    /// The unique path from `a` to `b`, inclusive of both endpoints.
    pub fn path(&self, a: usize, b: usize) -> Vec<usize> {
        let mut left = vec![a];
        let mut right = vec![b];
        let (mut x, mut y) = (a, b);
        while self.depth[x] > self.depth[y] {
            x = self.parent[x].unwrap();
            left.push(x);
        }
        while self.depth[y] > self.depth[x] {
            y = self.parent[y].unwrap();
            right.push(y);
        }
        while x != y {
            x = self.parent[x].unwrap();
            left.push(x);
            y = self.parent[y].unwrap();
            right.push(y);
        }
        right.pop();
        right.reverse();
        left.extend(right);
        left
    }

    /// Nodes ordered with every child before its parent (deterministic).
    pub fn post_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.n);
        let mut stack = vec![0usize];
        while let Some(v) = stack.pop() {
            order.push(v);
            stack.extend(&self.children[v]);
        }
        order.reverse();
        order
    }
}

fn canonical_edge(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

// ---------------------------------------------------------------------------
// Routing
// ---------------------------------------------------------------------------

/// A circuit rewritten to act only on tree edges, plus the bookkeeping
/// needed to translate node-indexed results back to logical qubits.
#[derive(Debug, Clone)]
pub struct RoutedCircuit {
    pub circuit: Circuit,
    /// `final_map[q]` is the tree node holding logical qubit `q` at the end.
    pub final_map: Vec<usize>,
    pub added_swaps: usize,
}

/// Transpile `c` onto the tree: gates on non-adjacent pairs are preceded by a
/// SWAP chain that walks the lower-index logical qubit along the unique tree
/// path until the pair shares an edge (no lookahead, no swap-back). A pair at
/// distance `d` costs `d - 1` SWAPs.
pub fn route_to_topology(c: &Circuit, topo: &TreeTopology) -> TtnResult<RoutedCircuit> {
    if c.n_qubits != topo.n_nodes() {
        return Err(TtnError::TopologyMismatch { circuit: c.n_qubits, topology: topo.n_nodes() });
    }
    let n = c.n_qubits;
    let mut l2p: Vec<usize> = (0..n).collect();
    let mut p2l: Vec<usize> = (0..n).collect();
    let mut gates: Vec<Gate> = Vec::with_capacity(c.gates.len());
    let mut added_swaps = 0usize;

    for gate in &c.gates {
        match gate {
            Gate::Rx { .. } | Gate::Rz { .. } | Gate::X { .. } => {
                gates.push(gate.relabel(|q| l2p[q]));
            }
            Gate::Rzz { a, b, .. } | Gate::Swap { a, b } => {
                bring_adjacent(topo, &mut l2p, &mut p2l, &mut gates, &mut added_swaps, *a, *b);
                gates.push(gate.relabel(|q| l2p[q]));
            }
            Gate::Mcry { .. } | Gate::Mcx { .. } => {
                return Err(TtnError::UnsupportedGate { name: gate.name() });
            }
        }
    }

    let mut circuit = Circuit::new(n);
    circuit.gates = gates;
    circuit.meta = c.meta.clone();
    Ok(RoutedCircuit { circuit, final_map: l2p, added_swaps })
}

/// Emit SWAPs that move the lower-index logical qubit of the pair along the
/// tree path until the two logical qubits sit on adjacent nodes.
fn bring_adjacent(
    topo: &TreeTopology,
    l2p: &mut [usize],
    p2l: &mut [usize],
    gates: &mut Vec<Gate>,
    added_swaps: &mut usize,
    la: usize,
    lb: usize,
) {
    let lo = la.min(lb);
    let hi = la.max(lb);
    let path = topo.path(l2p[lo], l2p[hi]);
    for step in 0..path.len().saturating_sub(2) {
        let from = path[step];
        let to = path[step + 1];
        gates.push(Gate::Swap { a: from.min(to), b: from.max(to) });
        *added_swaps += 1;
        let qa = p2l[from];
        let qb = p2l[to];
        p2l[from] = qb;
        p2l[to] = qa;
        l2p[qa] = to;
        l2p[qb] = from;
    }
}

/// Reindex a state over tree nodes back into logical qubit order using the
/// routing map, so it can be compared against a simulation of the original
/// circuit.
pub fn unroute_state(psi: &StateVector, final_map: &[usize]) -> StateVector {
    let n = final_map.len();
    let amps = psi.amplitudes();
    let mut out = vec![C64::new(0.0, 0.0); amps.len()];
    for (logical_index, slot) in out.iter_mut().enumerate() {
        let mut physical_index = 0usize;
        for (q, &node) in final_map.iter().enumerate() {
            let bit = (logical_index >> (n - 1 - q)) & 1;
            physical_index |= bit << (n - 1 - node);
        }
        *slot = amps[physical_index];
    }
    StateVector::from_amplitudes(n, out)
}

// ---------------------------------------------------------------------------
// State and simple update
// ---------------------------------------------------------------------------

/// Bond-truncated state on the tree, kept in the Vidal gauge.
#[derive(Debug, Clone)]
pub struct TtnState {
    topo: TreeTopology,
    chi: usize,
    /// Node tensors; legs are `[physical, edges in sorted neighbor order]`.
    tensors: Vec<NdTensor>,
    /// Positive singular weights per canonical edge.
    weights: HashMap<(usize, usize), Vec<f64>>,
    discarded_weight: f64,
    max_bond_seen: usize,
}

impl TtnState {
    /// The all-zeros product state: every bond has dimension one.
    pub fn zero_state(topo: &TreeTopology, chi: usize) -> Self {
        let n = topo.n_nodes();
        let mut tensors = Vec::with_capacity(n);
        for v in 0..n {
            let mut dims = vec![2usize];
            dims.extend(std::iter::repeat(1).take(topo.degree(v)));
            let mut data = vec![C64::new(0.0, 0.0); 2];
            data[0] = C64::new(1.0, 0.0);
            tensors.push(NdTensor::from_data(dims, data));
        }
        let weights = topo.edges().into_iter().map(|e| (e, vec![1.0])).collect();
        TtnState {
            topo: topo.clone(),
            chi: chi.max(1),
            tensors,
            weights,
            discarded_weight: 0.0,
            max_bond_seen: 1,
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.topo.n_nodes()
    }

    pub fn chi(&self) -> usize {
        self.chi
    }

    pub fn topology(&self) -> &TreeTopology {
        &self.topo
    }

    pub fn bond_dims(&self) -> Vec<((usize, usize), usize)> {
        let mut out: Vec<_> = self.weights.iter().map(|(&e, w)| (e, w.len())).collect();
        out.sort_unstable();
        out
    }

    pub fn max_bond(&self) -> usize {
        self.weights.values().map(Vec::len).max().unwrap_or(1)
    }

    pub fn max_bond_seen(&self) -> usize {
        self.max_bond_seen
    }

    pub fn discarded_weight(&self) -> f64 {
        self.discarded_weight
    }

    /// Position of the leg of `v`'s tensor that points at neighbor `u`.
    fn edge_leg(&self, v: usize, u: usize) -> usize {
        1 + self.topo.neighbors(v).binary_search(&u).expect("not a tree edge")
    }

    pub fn apply_gate(&mut self, gate: &Gate) -> TtnResult<()> {
        match gate {
            Gate::Rx { q, .. } | Gate::Rz { q, .. } | Gate::X { q } => {
                self.apply_1site(*q, &gate_1q_matrix(gate));
                Ok(())
            }
            Gate::Rzz { a, b, .. } | Gate::Swap { a, b } => {
                if !self.topo.are_adjacent(*a, *b) {
                    return Err(TtnError::NotTreeLocal { a: *a, b: *b });
                }
                self.apply_2site(*a, *b, &gate_2q_matrix(gate, *a, *b))
            }
            Gate::Mcry { .. } | Gate::Mcx { .. } => {
                Err(TtnError::UnsupportedGate { name: gate.name() })
            }
        }
    }

    pub fn apply_circuit(&mut self, c: &Circuit) -> TtnResult<()> {
        for gate in &c.gates {
            self.apply_gate(gate)?;
        }
        Ok(())
    }

    fn apply_1site(&mut self, v: usize, g: &DMatrix<C64>) {
        let t = &self.tensors[v];
        let updated = g * t.as_matrix(1);
        self.tensors[v] = NdTensor::from_matrix(&updated, &[2], &t.dims[1..]);
    }

    /// Simple update on edge `(u, v)` with the reduced-tensor trick: absorb
    /// the environment weights, split off the small `(physical, shared bond)`
    /// factors with QR/LQ, rotate and re-split only those, then restore the
    /// gauge by dividing the environment weights back out. On a tree this
    /// keeps the edge weights equal to the exact Schmidt values.
    fn apply_2site(&mut self, u: usize, v: usize, g: &DMatrix<C64>) -> TtnResult<()> {
        let edge = canonical_edge(u, v);
        let lam = self.weights[&edge].clone();
        let leg_uv = self.edge_leg(u, v);
        let leg_vu = self.edge_leg(v, u);

        // absorb environment weights into both endpoint tensors
        let mut a = self.tensors[u].clone();
        let mut b = self.tensors[v].clone();
        for &w in self.topo.neighbors(u) {
            if w != v {
                a.scale_leg(self.edge_leg(u, w), &self.weights[&canonical_edge(u, w)]);
            }
        }
        for &w in self.topo.neighbors(v) {
            if w != u {
                b.scale_leg(self.edge_leg(v, w), &self.weights[&canonical_edge(v, w)]);
            }
        }

        // A: [env..., phys, shared]  B: [shared, phys, env...]
        let mut perm_a: Vec<usize> =
            (0..a.ndim()).filter(|&l| l != 0 && l != leg_uv).collect();
        perm_a.extend([0, leg_uv]);
        let mut perm_b: Vec<usize> = vec![leg_vu, 0];
        perm_b.extend((0..b.ndim()).filter(|&l| l != 0 && l != leg_vu));
        let a_perm = a.permute(&perm_a);
        let b_perm = b.permute(&perm_b);

        let env_a: Vec<usize> = a_perm.dims[..a_perm.ndim() - 2].to_vec();
        let env_b: Vec<usize> = b_perm.dims[2..].to_vec();
        let (q_a, r_a) = thin_qr(&a_perm.as_matrix(a_perm.ndim() - 2));
        let (l_b, q_b) = thin_lq(&b_perm.as_matrix(2));
        let ra = r_a.nrows();
        let rb = l_b.ncols();

        // theta[(ra, p), (q, rb)] = sum_k r_a[ra, (p, k)] lam[k] l_b[(k, q), rb]
        let mut r_a_t = NdTensor::from_matrix(&r_a, &[ra], &[2, lam.len()]);
        r_a_t.scale_leg(2, &lam);
        let theta =
            r_a_t.as_matrix(2) * NdTensor::from_matrix(&l_b, &[lam.len(), 2], &[rb]).as_matrix(1);

        // rotate the two physical legs
        let mut rotated = DMatrix::zeros(ra * 2, 2 * rb);
        for i in 0..ra {
            for pn in 0..2 {
                for qn in 0..2 {
                    for j in 0..rb {
                        let mut acc = C64::new(0.0, 0.0);
                        for p in 0..2 {
                            for q in 0..2 {
                                acc += g[(pn * 2 + qn, p * 2 + q)] * theta[(i * 2 + p, q * rb + j)];
                            }
                        }
                        rotated[(i * 2 + pn, qn * rb + j)] = acc;
                    }
                }
            }
        }

        let policy = TruncationPolicy { chi_max: self.chi, cutoff: TTN_CUTOFF };
        let split = svd_truncate(&rotated, &policy)?;
        let kept = split.s.len();
        self.discarded_weight += split.discarded_weight;
        self.max_bond_seen = self.max_bond_seen.max(kept);

        // rebuild endpoint tensors and undo the environment absorption
        let recip = |w: &[f64]| -> Vec<f64> {
            w.iter().map(|&x| if x > 0.0 { 1.0 / x } else { 0.0 }).collect()
        };
        let new_a_mat = q_a * NdTensor::from_matrix(&split.u, &[ra, 2], &[kept]).as_matrix(1);
        let mut new_a =
            NdTensor::from_matrix(&new_a_mat, &env_a, &[2, kept]).permute(&inverse_permutation(&perm_a));
        for &w in self.topo.neighbors(u) {
            if w != v {
                new_a.scale_leg(self.edge_leg(u, w), &recip(&self.weights[&canonical_edge(u, w)]));
            }
        }

        let new_b_mat = NdTensor::from_matrix(&split.vt, &[kept], &[2, rb]).as_matrix(2) * q_b;
        let mut new_b =
            NdTensor::from_matrix(&new_b_mat, &[kept, 2], &env_b).permute(&inverse_permutation(&perm_b));
        for &w in self.topo.neighbors(v) {
            if w != u {
                new_b.scale_leg(self.edge_leg(v, w), &recip(&self.weights[&canonical_edge(v, w)]));
            }
        }

        self.tensors[u] = new_a;
        self.tensors[v] = new_b;
        self.weights.insert(edge, split.s);
        Ok(())
    }

    /// Exact amplitude of one computational-basis state (bits indexed by
    /// tree node), contracted leaves-to-root.
    pub fn amplitude(&self, bits: &BitString) -> C64 {
        assert_eq!(bits.len(), self.n_qubits());
        let mut msgs: Vec<Option<Vec<C64>>> = vec![None; self.n_qubits()];
        for v in self.topo.post_order() {
            let mut red = self.tensors[v].select_first(bits.bit(v) as usize);
            let mut legs: Vec<usize> = self.topo.neighbors(v).to_vec();
            while let Some(pos) = legs.iter().position(|&w| Some(w) != self.topo.parent(v)) {
                let w = legs[pos];
                let lam = &self.weights[&canonical_edge(v, w)];
                let child_msg = msgs[w].take().expect("child processed before parent");
                let scaled: Vec<C64> =
                    lam.iter().zip(&child_msg).map(|(&l, &m)| m * l).collect();
                red = red.contract_leg(pos, &scaled);
                legs.remove(pos);
            }
            msgs[v] = Some(red.data);
        }
        msgs[0].take().expect("root message")[0]
    }

    /// Dense statevector over tree-node order (small systems only).
    pub fn to_statevector(&self) -> TtnResult<StateVector> {
        let n = self.n_qubits();
        if n > MAX_DENSE_TREE_QUBITS {
            return Err(TtnError::TooLarge { n });
        }
        let amps: Vec<C64> =
            (0..1usize << n).map(|i| self.amplitude(&BitString::from_index(i, n))).collect();
        Ok(StateVector::from_amplitudes(n, amps))
    }

    /// Condition the state on node `v` reading `bit`, renormalizing the local
    /// tensor. The edge weights become stale as Schmidt values, but belief
    /// propagation marginals are gauge-independent, so readout stays exact.
    pub fn project_node(&mut self, v: usize, bit: u8) -> TtnResult<()> {
        let t = &mut self.tensors[v];
        let half = t.len() / 2;
        let before = t.norm();
        for i in 0..half {
            t.data[(1 - bit as usize) * half + i] = C64::new(0.0, 0.0);
        }
        let after = t.norm();
        if after <= before * 1e-12 {
            return Err(TtnError::ZeroProbabilityBranch { node: v, bit });
        }
        t.scale(1.0 / after);
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Belief propagation
// ---------------------------------------------------------------------------

/// Converged message set: one unit-trace positive semidefinite matrix per
/// directed edge (rows index the ket bond, columns the bra bond).
#[derive(Debug, Clone)]
pub struct BpMessages {
    messages: HashMap<(usize, usize), DMatrix<C64>>,
    pub sweeps: usize,
    pub residual: f64,
}

impl BpMessages {
    pub fn message(&self, from: usize, to: usize) -> Option<&DMatrix<C64>> {
        self.messages.get(&(from, to))
    }
}

/// Node tensors with the square root of each edge weight absorbed, so the
/// state is the plain contraction of the returned tensors.
fn absorbed_tensors(state: &TtnState) -> Vec<NdTensor> {
    let mut out = Vec::with_capacity(state.n_qubits());
    for v in 0..state.n_qubits() {
        let mut t = state.tensors[v].clone();
        for &w in state.topo.neighbors(v) {
            let lam = &state.weights[&canonical_edge(v, w)];
            let sqrt: Vec<f64> = lam.iter().map(|x| x.sqrt()).collect();
            t.scale_leg(state.edge_leg(v, w), &sqrt);
        }
        out.push(t);
    }
    out
}

/// One outgoing message: contract node `u`'s tensor against its conjugate
/// with all incoming messages except the one from `v`, leaving the `(u, v)`
/// bond open on both layers.
fn compute_message(
    state: &TtnState,
    absorbed: &[NdTensor],
    messages: &HashMap<(usize, usize), DMatrix<C64>>,
    u: usize,
    v: usize,
) -> DMatrix<C64> {
    let t = &absorbed[u];
    let mut y = t.clone();
    for &w in state.topo.neighbors(u) {
        if w != v {
            y = y.contract_leg_matrix(state.edge_leg(u, w), &messages[&(w, u)]);
        }
    }
    let out_leg = state.edge_leg(u, v);
    let mut perm: Vec<usize> = (0..t.ndim()).filter(|&l| l != out_leg).collect();
    perm.push(out_leg);
    let y_mat = y.permute(&perm).as_matrix(t.ndim() - 1);
    let t_mat = t.permute(&perm).as_matrix(t.ndim() - 1);
    let mut m = y_mat.transpose() * t_mat.conjugate();
    let trace: f64 = (0..m.nrows()).map(|i| m[(i, i)].re).sum();
    if trace.abs() > 0.0 {
        m /= C64::new(trace, 0.0);
    }
    m
}

/// Run message passing to a fixed point. The sweep order is post-order
/// (children before parents) for upward messages, then the reverse for
/// downward ones, so on a tree one sweep already yields the exact messages
/// and the second sweep certifies convergence.
pub fn bp_run(state: &TtnState) -> TtnResult<BpMessages> {
    let topo = &state.topo;
    let absorbed = absorbed_tensors(state);

    let mut schedule: Vec<(usize, usize)> = Vec::new();
    let post = topo.post_order();
    for &v in &post {
        if let Some(p) = topo.parent(v) {
            schedule.push((v, p));
        }
    }
    for &v in post.iter().rev() {
        if let Some(p) = topo.parent(v) {
            schedule.push((p, v));
        }
    }

    let mut messages: HashMap<(usize, usize), DMatrix<C64>> = HashMap::new();
    for (a, b) in topo.edges() {
        let dim = state.weights[&(a, b)].len();
        let uniform = DMatrix::identity(dim, dim) / C64::new(dim as f64, 0.0);
        messages.insert((a, b), uniform.clone());
        messages.insert((b, a), uniform);
    }

    let mut sweeps = 0usize;
    loop {
        let mut residual = 0.0f64;
        for &(from, to) in &schedule {
            let new = compute_message(state, &absorbed, &messages, from, to);
            let old = &messages[&(from, to)];
            if new.shape() == old.shape() {
                let diff = (&new - old).iter().map(|c| c.norm()).fold(0.0f64, f64::max);
                residual = residual.max(diff);
            } else {
                residual = f64::INFINITY;
            }
            messages.insert((from, to), new);
        }
        sweeps += 1;
        if residual <= BP_TOL {
            return Ok(BpMessages { messages, sweeps, residual });
        }
        if sweeps >= BP_MAX_SWEEPS {
            return Err(TtnError::NoConvergence { residual, sweeps });
        }
    }
}

/// Marginals together with the convergence summary of the message pass.
#[derive(Debug, Clone)]
pub struct BpOutcome {
    /// `<Z_v>` per tree node.
    pub marginals: Vec<f64>,
    pub sweeps: usize,
    pub residual: f64,
}

/// Single-qubit `<Z>` marginals from converged messages. Each marginal is a
/// ratio of local contractions, so the overall state normalization cancels.
pub fn bp_marginals(state: &TtnState) -> TtnResult<BpOutcome> {
    let msgs = bp_run(state)?;
    let absorbed = absorbed_tensors(state);
    let mut marginals = Vec::with_capacity(state.n_qubits());
    for v in 0..state.n_qubits() {
        let t = &absorbed[v];
        let mut y = t.clone();
        for &w in state.topo.neighbors(v) {
            y = y.contract_leg_matrix(state.edge_leg(v, w), msgs.message(w, v).unwrap());
        }
        let half = t.len() / 2;
        let mut plus = C64::new(0.0, 0.0);
        let mut minus = C64::new(0.0, 0.0);
        for i in 0..half {
            plus += y.data[i] * t.data[i].conj();
            minus += y.data[half + i] * t.data[half + i].conj();
        }
        let denom = (plus + minus).re;
        let numer = (plus - minus).re;
        marginals.push(if denom.abs() > 0.0 { numer / denom } else { 0.0 });
    }
    Ok(BpOutcome { marginals, sweeps: msgs.sweeps, residual: msgs.residual })
}

// ---------------------------------------------------------------------------
// Attacks
// ---------------------------------------------------------------------------

/// Result of the greedy conditional bit-fixing pass.
#[derive(Debug, Clone)]
pub struct GreedyOutcome {
    /// Recovered bit per tree node.
    pub bits: BitString,
    /// Nodes in the order they were fixed.
    pub order: Vec<usize>,
}

/// Iteratively fix the qubit with the largest marginal bias (ties break to
/// the lowest node index) to its likelier bit, project, and rerun belief
/// propagation so later decisions are conditioned on earlier ones.
pub fn greedy_conditional_attack(state: &TtnState) -> TtnResult<GreedyOutcome> {
    let n = state.n_qubits();
    let mut work = state.clone();
    let mut fixed = vec![false; n];
    let mut bits = BitString::zeros(n);
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let out = bp_marginals(&work)?;
        let mut pick = None;
        let mut best = -1.0f64;
        for q in 0..n {
            if !fixed[q] && out.marginals[q].abs() > best {
                best = out.marginals[q].abs();
                pick = Some(q);
            }
        }
        let q = pick.expect("unfixed qubit remains");
        let bit = u8::from(out.marginals[q] < 0.0);
        work.project_node(q, bit)?;
        fixed[q] = true;
        bits.set_bit(q, bit);
        order.push(q);
    }
    Ok(GreedyOutcome { bits, order })
}

/// Full tree-network attack summary. Candidates are reported in logical
/// qubit order (routing already undone via the final map).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TtnAttackResult {
    pub chi: usize,
    pub final_map: Vec<usize>,
    pub added_swaps: usize,
    pub max_bond: usize,
    pub discarded_weight: f64,
    pub sweeps: usize,
    pub residual: f64,
    pub plain_candidate: BitString,
    pub greedy_candidate: BitString,
    pub plain_recovery: Option<f64>,
    pub greedy_recovery: Option<f64>,
    /// The better of the two candidates when the truth is known, otherwise
    /// the greedy one.
    pub best_candidate: BitString,
    pub best_recovery: Option<f64>,
}

fn node_bits_to_logical(bits: &BitString, final_map: &[usize]) -> BitString {
    BitString::from_bits(final_map.iter().map(|&node| bits.bit(node)).collect())
}

/// Route, simulate at bond cap `chi`, then read out both the plain marginal
/// candidate and the greedy conditional candidate.
pub fn ttn_attack(
    c: &Circuit,
    chi: usize,
    truth: Option<&BitString>,
) -> TtnResult<TtnAttackResult> {
    let topo = build_tree_topology(c.n_qubits)?;
    let routed = route_to_topology(c, &topo)?;
    let mut state = TtnState::zero_state(&topo, chi);
    state.apply_circuit(&routed.circuit)?;

    let plain = bp_marginals(&state)?;
    let plain_candidate = node_bits_to_logical(&bits_from_z(&plain.marginals), &routed.final_map);
    let greedy = greedy_conditional_attack(&state)?;
    let greedy_candidate = node_bits_to_logical(&greedy.bits, &routed.final_map);

    let plain_recovery = truth.map(|t| recovery_fraction(&plain_candidate, t));
    let greedy_recovery = truth.map(|t| recovery_fraction(&greedy_candidate, t));
    let greedy_wins = match (plain_recovery, greedy_recovery) {
        (Some(p), Some(g)) => g >= p,
        _ => true,
    };
    let (best_candidate, best_recovery) = if greedy_wins {
        (greedy_candidate.clone(), greedy_recovery)
    } else {
        (plain_candidate.clone(), plain_recovery)
    };

    Ok(TtnAttackResult {
        chi,
        final_map: routed.final_map,
        added_swaps: routed.added_swaps,
        max_bond: state.max_bond_seen(),
        discarded_weight: state.discarded_weight(),
        sweeps: plain.sweeps,
        residual: plain.residual,
        plain_candidate,
        greedy_candidate,
        plain_recovery,
        greedy_recovery,
        best_candidate,
        best_recovery,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::brickwork;
    use crate::statevector::simulate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_circuit(n: usize, rzz: usize, seed: u64) -> Circuit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        brickwork(n, rzz, &mut rng)
    }

    fn oracle_z(c: &Circuit) -> Vec<f64> {
        simulate(c, &BitString::zeros(c.n_qubits)).unwrap().z_expectations()
    }

    #[test]
    fn topology_examples() {
        let t4 = build_tree_topology(4).unwrap();
        assert_eq!(t4.neighbors(0), &[1, 2, 3]);
        for v in 1..4 {
            assert_eq!(t4.degree(v), 1);
        }

        let t10 = build_tree_topology(10).unwrap();
        // three subtrees of equal size
        let sizes: Vec<usize> = t10
            .neighbors(0)
            .iter()
            .map(|&root| {
                let mut count = 0;
                let mut stack = vec![root];
                while let Some(v) = stack.pop() {
                    count += 1;
                    stack.extend(t10.children[v].iter().copied());
                }
                count
            })
            .collect();
        assert_eq!(sizes, vec![3, 3, 3]);

        for n in [4, 5, 7, 10, 13, 20] {
            let t = build_tree_topology(n).unwrap();
            assert_eq!(t.edges().len(), n - 1);
            assert!(t.degree(0) <= 4);
            for v in 1..n {
                assert!(t.degree(v) <= 3, "degree of {v} too high");
            }
            // connected: every node reaches the root by parent pointers
            for v in 0..n {
                let mut x = v;
                let mut hops = 0;
                while let Some(p) = t.parent(x) {
                    x = p;
                    hops += 1;
                    assert!(hops <= n);
                }
                assert_eq!(x, 0);
            }
            // path endpoints and adjacency agree
            let path = t.path(n - 1, n - 2);
            assert_eq!(*path.first().unwrap(), n - 1);
            assert_eq!(*path.last().unwrap(), n - 2);
            for pair in path.windows(2) {
                assert!(t.are_adjacent(pair[0], pair[1]));
            }
        }
        assert!(matches!(build_tree_topology(3), Err(TtnError::TooFewQubits { .. })));
    }

    #[test]
    fn routing_tree_local_circuit_unchanged() {
        let t = build_tree_topology(6).unwrap();
        let mut c = Circuit::new(6);
        c.push(Gate::Rx { q: 2, theta: 0.3 });
        let (a, b) = t.edges()[0];
        c.push(Gate::Rzz { a, b, theta: 0.5 });
        let routed = route_to_topology(&c, &t).unwrap();
        assert_eq!(routed.added_swaps, 0);
        assert_eq!(routed.circuit.gates, c.gates);
        assert_eq!(routed.final_map, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn routing_distant_pair_costs_path_minus_one_swaps() {
        let t = build_tree_topology(10).unwrap();
        // two leaves in different subtrees
        let (a, b) = (3, 9);
        let d = t.path(a, b).len() - 1;
        assert!(d >= 2);
        let mut c = Circuit::new(10);
        c.push(Gate::Rzz { a, b, theta: 0.7 });
        let routed = route_to_topology(&c, &t).unwrap();
        assert_eq!(routed.added_swaps, d - 1);
        assert_eq!(routed.circuit.gates.len(), d);
    }

    #[test]
    fn routing_preserves_state_up_to_relabeling() {
        let t = build_tree_topology(10).unwrap();
        let c = random_circuit(10, 18, 41);
        let routed = route_to_topology(&c, &t).unwrap();
        let original = simulate(&c, &BitString::zeros(10)).unwrap();
        let physical = simulate(&routed.circuit, &BitString::zeros(10)).unwrap();
        let relabeled = unroute_state(&physical, &routed.final_map);
        for i in 0..1 << 10 {
            let d = (relabeled.amplitudes()[i] - original.amplitudes()[i]).norm();
            assert!(d < 1e-10, "amplitude {i} differs by {d}");
        }
    }

    #[test]
    fn untruncated_evolution_matches_oracle_amplitudes() {
        let t = build_tree_topology(10).unwrap();
        let c = random_circuit(10, 16, 7);
        let routed = route_to_topology(&c, &t).unwrap();
        let mut state = TtnState::zero_state(&t, 1 << 5);
        state.apply_circuit(&routed.circuit).unwrap();
        assert_eq!(state.discarded_weight(), 0.0);
        let dense = state.to_statevector().unwrap();
        let oracle = simulate(&routed.circuit, &BitString::zeros(10)).unwrap();
        for i in 0..1 << 10 {
            let d = (dense.amplitudes()[i] - oracle.amplitudes()[i]).norm();
            assert!(d < 1e-8, "amplitude {i} differs by {d}");
        }
    }

    #[test]
    fn product_circuit_keeps_all_bonds_one() {
        let t = build_tree_topology(8).unwrap();
        let mut c = Circuit::new(8);
        for q in 0..8 {
            c.push(Gate::Rx { q, theta: 0.3 + q as f64 * 0.1 });
            c.push(Gate::Rz { q, theta: 1.1 });
        }
        let mut state = TtnState::zero_state(&t, 16);
        state.apply_circuit(&c).unwrap();
        assert_eq!(state.max_bond(), 1);

        // an entangling circuit at chi = 1 is forced to stay mean-field
        let e = random_circuit(8, 10, 5);
        let routed = route_to_topology(&e, &t).unwrap();
        let mut mf = TtnState::zero_state(&t, 1);
        mf.apply_circuit(&routed.circuit).unwrap();
        assert_eq!(mf.max_bond(), 1);
        let out = bp_marginals(&mf).unwrap();
        for m in out.marginals {
            assert!((-1.0..=1.0).contains(&m));
        }
    }

    #[test]
    fn bp_zero_state_and_residual() {
        let t = build_tree_topology(9).unwrap();
        let state = TtnState::zero_state(&t, 4);
        let out = bp_marginals(&state).unwrap();
        assert!(out.sweeps <= 2);
        assert!(out.residual <= 1e-12);
        for m in out.marginals {
            assert!((m - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bp_marginals_match_oracle_untruncated() {
        let t = build_tree_topology(10).unwrap();
        let c = random_circuit(10, 20, 23);
        let routed = route_to_topology(&c, &t).unwrap();
        let mut state = TtnState::zero_state(&t, 1 << 5);
        state.apply_circuit(&routed.circuit).unwrap();
        let out = bp_marginals(&state).unwrap();
        assert_eq!(out.sweeps, 2);
        assert!(out.residual <= 1e-12);
        let oracle = oracle_z(&routed.circuit);
        for (q, (a, b)) in out.marginals.iter().zip(&oracle).enumerate() {
            assert!((a - b).abs() < 1e-8, "marginal {q}: {a} vs {b}");
        }
    }

    #[test]
    fn bp_matches_exact_contraction_of_truncated_state() {
        let t = build_tree_topology(10).unwrap();
        let c = random_circuit(10, 20, 29);
        let routed = route_to_topology(&c, &t).unwrap();
        let mut state = TtnState::zero_state(&t, 2);
        state.apply_circuit(&routed.circuit).unwrap();
        assert!(state.discarded_weight() > 0.0);
        let out = bp_marginals(&state).unwrap();
        let dense = state.to_statevector().unwrap();
        let norm = dense.norm_sqr();
        let exact: Vec<f64> =
            dense.z_expectations().iter().map(|z| z / norm).collect();
        for (q, (a, b)) in out.marginals.iter().zip(&exact).enumerate() {
            assert!((a - b).abs() < 1e-10, "marginal {q}: {a} vs {b}");
        }
    }

    #[test]
    fn greedy_attack_recovers_product_peak() {
        let t = build_tree_topology(9).unwrap();
        let mut c = Circuit::new(9);
        // flip a few qubits so the peak is a nontrivial basis state
        for q in [1, 4, 6, 8] {
            c.push(Gate::X { q });
        }
        let mut state = TtnState::zero_state(&t, 4);
        state.apply_circuit(&c).unwrap();
        let greedy = greedy_conditional_attack(&state).unwrap();
        assert_eq!(greedy.bits, BitString::parse("010010101").unwrap());
        assert_eq!(greedy.order.len(), 9);
    }

    #[test]
    fn greedy_tie_break_is_lowest_index() {
        let t = build_tree_topology(6).unwrap();
        let mut c = Circuit::new(6);
        for q in 0..6 {
            // every qubit maximally unbiased
            c.push(Gate::Rx { q, theta: std::f64::consts::FRAC_PI_2 });
        }
        let mut state = TtnState::zero_state(&t, 4);
        state.apply_circuit(&c).unwrap();
        let greedy = greedy_conditional_attack(&state).unwrap();
        // all biases are zero, so the fixing order is simply ascending
        assert_eq!(greedy.order, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(greedy.bits, BitString::zeros(6));
    }

    #[test]
    fn projecting_impossible_branch_errors() {
        let t = build_tree_topology(5).unwrap();
        let mut state = TtnState::zero_state(&t, 2);
        let err = state.project_node(2, 1).unwrap_err();
        assert!(matches!(err, TtnError::ZeroProbabilityBranch { node: 2, bit: 1 }));
    }

    #[test]
    fn attack_on_statevector_peaked_circuit() {
        // a circuit whose output is exactly a basis state: attack must hit it
        let mut c = Circuit::new(8);
        for q in [0, 3, 7] {
            c.push(Gate::X { q });
        }
        let (a, b) = (1, 5);
        c.push(Gate::Rzz { a, b, theta: 0.4 });
        let truth = BitString::parse("10010001").unwrap();
        let res = ttn_attack(&c, 8, Some(&truth)).unwrap();
        assert_eq!(res.best_recovery, Some(1.0));
        assert_eq!(res.best_candidate, truth);
        assert_eq!(res.plain_recovery, Some(1.0));
    }
}
