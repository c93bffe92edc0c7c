//! Qubit interaction graphs and bandwidth-reducing relabelings.
//!
//! The interaction graph has one vertex per qubit and an edge for every pair
//! of qubits that share a gate. [`rcm_order`] computes a reverse Cuthill-McKee
//! relabeling of that graph, which tends to push interactions toward the
//! diagonal so a chain-shaped tensor network needs fewer routing swaps.

use std::collections::BTreeSet;

use crate::circuit::{Circuit, QubitPermutation};

/// Undirected simple graph over qubits.
#[derive(Debug, Clone)]
pub struct AdjacencyGraph {
    n: usize,
    adj: Vec<BTreeSet<usize>>,
}

impl AdjacencyGraph {
    pub fn new(n: usize) -> Self {
        AdjacencyGraph {
            n,
            adj: vec![BTreeSet::new(); n],
        }
    }

    /// Interaction graph of a circuit: an edge for each pair of qubits that
    /// appear together in some gate.
    pub fn from_circuit(c: &Circuit) -> Self {
        let mut g = AdjacencyGraph::new(c.n_qubits);
        for gate in &c.gates {
            let qs = gate.qubits();
            for i in 0..qs.len() {
                for j in (i + 1)..qs.len() {
                    g.add_edge(qs[i], qs[j]);
                }
            }
        }
        g
    }

    pub fn add_edge(&mut self, a: usize, b: usize) {
        assert!(a < self.n && b < self.n && a != b);
        self.adj[a].insert(b);
        self.adj[b].insert(a);
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[v].iter().copied()
    }

    /// Max `|label(a) - label(b)|` over edges, under an optional relabeling.
    pub fn bandwidth(&self, perm: Option<&QubitPermutation>) -> usize {
        let label = |v: usize| perm.map_or(v, |p| p.forward()[v]);
        let mut bw = 0;
        for a in 0..self.n {
            for &b in &self.adj[a] {
                if a < b {
                    bw = bw.max(label(a).abs_diff(label(b)));
                }
            }
        }
        bw
    }
}

/// Reverse Cuthill-McKee ordering.
///
/// Deterministic tie-breaking throughout: the start vertex of each connected
/// component is the unvisited vertex with minimum degree (lowest index on
/// ties), and neighbors are enqueued in ascending (degree, index) order.
/// Returns the relabeling `old -> new`.
pub fn rcm_order(g: &AdjacencyGraph) -> QubitPermutation {
    let n = g.n();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    while order.len() < n {
        let start = (0..n)
            .filter(|&v| !visited[v])
            .min_by_key(|&v| (g.degree(v), v))
            .expect("unvisited vertex exists");
        visited[start] = true;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = g.neighbors(v).filter(|&u| !visited[u]).collect();
            next.sort_by_key(|&u| (g.degree(u), u));
            for u in next {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }

    order.reverse();
    let mut forward = vec![0; n];
    for (new, &old) in order.iter().enumerate() {
        forward[old] = new;
    }
    QubitPermutation::from_forward(forward).expect("rcm produces a permutation")
}
