//! Simple undirected graphs, their augmented normalized operators, and
//! label statistics.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, SparseRowMatrix};

/// Undirected simple graph. Each edge is stored once as `(u, v)` with `u < v`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Strict constructor: rejects self-loops, duplicates and out-of-range
    /// endpoints. `(u, v)` and `(v, u)` count as the same edge.
    pub fn new(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let report = validate_edges(n_nodes, edges);
        if !report.is_clean() {
            return Err(Error::Validation(report.summary()));
        }
        Ok(Self::canonical(n_nodes, edges.iter().copied()))
    }

    /// Lenient constructor for file input: symmetrizes, deduplicates and
    /// drops self-loops (each with a warning). Out-of-range endpoints are
    /// still an error.
    pub fn from_edge_list(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let report = validate_edges(n_nodes, edges);
        if !report.out_of_range.is_empty() {
            return Err(Error::Validation(report.summary()));
        }
        if !report.duplicates.is_empty() {
            log::warn!("dropping {} duplicate edges", report.duplicates.len());
        }
        if !report.self_loops.is_empty() {
            log::warn!("dropping {} self-loops", report.self_loops.len());
        }
        Ok(Self::canonical(n_nodes, edges.iter().copied().filter(|(u, v)| u != v)))
    }

    /// Like [`Graph::from_edge_list`] for generators, where merged duplicates
    /// are expected and not worth a warning.
    pub(crate) fn from_edge_list_quiet(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if let Some(&(u, v)) = edges.iter().find(|&&(u, v)| u >= n_nodes || v >= n_nodes) {
            return Err(Error::Validation(format!("edge ({u}, {v}) out of range for {n_nodes} nodes")));
        }
        Ok(Self::canonical(n_nodes, edges.iter().copied().filter(|(u, v)| u != v)))
    }

    fn canonical(n_nodes: usize, edges: impl Iterator<Item = (usize, usize)>) -> Self {
        let set: BTreeSet<(usize, usize)> = edges.map(|(u, v)| (u.min(v), u.max(v))).collect();
        Self {
            n_nodes,
            edges: set.into_iter().collect(),
        }
    }

    /// Path `0 - 1 - … - (n-1)`.
    pub fn chain(n: usize) -> Self {
        Self::canonical(n, (1..n).map(|i| (i - 1, i)))
    }

    pub fn cycle(n: usize) -> Self {
        Self::canonical(n, (0..n).map(|i| (i, (i + 1) % n)).filter(|(u, v)| u != v))
    }

    pub fn complete(n: usize) -> Self {
        Self::canonical(n, (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))))
    }

    /// Erdős–Rényi G(n, p).
    pub fn gnp<R: rand::Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("edge probability must lie in [0, 1], got {p}")));
        }
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random_bool(p) {
                    edges.push((u, v));
                }
            }
        }
        Self::new(n, &edges)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Both orientations of every edge as `(sender, receiver)`, sorted by
    /// receiver then sender.
    pub fn directed_edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self.edges.iter().flat_map(|&(u, v)| [(u, v), (v, u)]).collect();
        out.sort_unstable_by_key(|&(src, dst)| (dst, src));
        out
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn adjacency_dense(&self) -> Matrix {
        let mut a = Matrix::zeros(self.n_nodes, self.n_nodes);
        for &(u, v) in &self.edges {
            a[(u, v)] = 1.0;
            a[(v, u)] = 1.0;
        }
        a
    }

    /// Unnormalized Laplacian `D − A`.
    pub fn laplacian_dense(&self) -> Matrix {
        let mut l = self.adjacency_dense().scale(-1.0);
        for (i, d) in self.degrees().into_iter().enumerate() {
            l[(i, i)] = d as f64;
        }
        l
    }

    pub fn connected_components(&self) -> usize {
        let adj = self.neighbors();
        let mut seen = vec![false; self.n_nodes];
        let mut count = 0;
        for start in 0..self.n_nodes {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        count
    }

    /// Same graph with node `i` renamed to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self::canonical(self.n_nodes, self.edges.iter().map(|&(u, v)| (perm[u], perm[v])))
    }

    pub fn validate(&self) -> ValidationReport {
        validate_edges(self.n_nodes, &self.edges)
    }
}

/// Structural problems found in a raw edge list. Connectivity is reported,
/// never enforced.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub self_loops: Vec<usize>,
    pub duplicates: Vec<(usize, usize)>,
    pub out_of_range: Vec<(usize, usize)>,
    pub connected: bool,
    pub components: usize,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.self_loops.is_empty() && self.duplicates.is_empty() && self.out_of_range.is_empty()
    }

    pub fn summary(&self) -> String {
        format!(
            "{} self-loops, {} duplicate edges, {} out-of-range edges, {} components",
            self.self_loops.len(),
            self.duplicates.len(),
            self.out_of_range.len(),
            self.components
        )
    }
}

pub fn validate_edges(n_nodes: usize, edges: &[(usize, usize)]) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen = BTreeSet::new();
    let mut kept = Vec::new();
    for &(u, v) in edges {
        if u >= n_nodes || v >= n_nodes {
            report.out_of_range.push((u, v));
            continue;
        }
        if u == v {
            report.self_loops.push(u);
            continue;
        }
        let key = (u.min(v), u.max(v));
        if !seen.insert(key) {
            report.duplicates.push((u, v));
            continue;
        }
        kept.push(key);
    }
    let g = Graph {
        n_nodes,
        edges: kept,
    };
    report.components = g.connected_components();
    report.connected = report.components <= 1;
    report
}

/// Report-only check of a graph or raw edge list.
pub fn validate_graph(n_nodes: usize, edges: &[(usize, usize)]) -> ValidationReport {
    validate_edges(n_nodes, edges)
}

/// `S̃ = D̃^{-1/2}(A + I)D̃^{-1/2}`, `L̃ = I − S̃` and the augmented degrees
/// `d̃ = d + 1`.
#[derive(Debug, Clone)]
pub struct NormalizedOperators {
    pub s_tilde: SparseRowMatrix,
    pub laplacian: SparseRowMatrix,
    pub aug_degrees: Vec<f64>,
}

impl NormalizedOperators {
    /// `S̃ᵤᵤ = 1 / d̃ᵤ`.
    pub fn self_weight(&self, u: usize) -> f64 {
        1.0 / self.aug_degrees[u]
    }

    /// `S̃ᵤᵥ = 1 / sqrt(d̃ᵤ d̃ᵥ)` for an edge `(u, v)`.
    pub fn edge_weight(&self, u: usize, v: usize) -> f64 {
        1.0 / (self.aug_degrees[u] * self.aug_degrees[v]).sqrt()
    }
}

pub fn normalize_adjacency(g: &Graph) -> NormalizedOperators {
    let n = g.n_nodes();
    let aug_degrees: Vec<f64> = g.degrees().into_iter().map(|d| d as f64 + 1.0).collect();
    let inv_sqrt: Vec<f64> = aug_degrees.iter().map(|d| 1.0 / d.sqrt()).collect();

    let mut s_triplets = Vec::with_capacity(n + 2 * g.n_edges());
    let mut l_triplets = Vec::with_capacity(n + 2 * g.n_edges());
    for (u, d) in aug_degrees.iter().enumerate() {
        let self_w = 1.0 / d;
        s_triplets.push((u, u, self_w));
        l_triplets.push((u, u, 1.0 - self_w));
    }
    for &(u, v) in g.edges() {
        let w = inv_sqrt[u] * inv_sqrt[v];
        s_triplets.extend([(u, v, w), (v, u, w)]);
        l_triplets.extend([(u, v, -w), (v, u, -w)]);
    }
    NormalizedOperators {
        s_tilde: SparseRowMatrix::from_triplets(n, n, s_triplets).expect("indices from a valid graph"),
        laplacian: SparseRowMatrix::from_triplets(n, n, l_triplets).expect("indices from a valid graph"),
        aug_degrees,
    }
}

/// Fraction of edges whose endpoints share a label.
pub fn edge_homophily(g: &Graph, labels: &[usize]) -> Result<f64> {
    if labels.len() != g.n_nodes() {
        return Err(Error::dim("edge_homophily", (g.n_nodes(), 1), (labels.len(), 1)));
    }
    if g.n_edges() == 0 {
        return Err(Error::Evaluation("edge homophily of a graph without edges".into()));
    }
    let same = g.edges().iter().filter(|&&(u, v)| labels[u] == labels[v]).count();
    Ok(same as f64 / g.n_edges() as f64)
}
