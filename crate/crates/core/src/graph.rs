// SPDX-License-Identifier: Apache-2.0

//! Undirected graph view of a netlist, node features, normalized adjacency
//! and centrality metrics.
//!
//! One node per net. Edge `u - v` exists when `v`'s driver reads `u` (or the
//! other way around); duplicates and self-edges are dropped.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logic::LogicValue;
use crate::netlist::{GateKind, Interface, Netlist};
use crate::tensor::Tensor2;

pub const INTERFACE_SLOTS: usize = 3;
pub const GATE_SLOTS: usize = 10;
pub const LOGIC_SLOTS: usize = 4;
pub const FEATURE_WIDTH: usize = INTERFACE_SLOTS + GATE_SLOTS + LOGIC_SLOTS;
pub const GATE_OFFSET: usize = INTERFACE_SLOTS;
pub const LOGIC_OFFSET: usize = INTERFACE_SLOTS + GATE_SLOTS;

pub const EIGENVECTOR_MAX_ITER: usize = 1000;
pub const EIGENVECTOR_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("eigenvector centrality did not converge after {iterations} iterations")]
    EigenvectorNoConvergence { iterations: usize, last: Vec<f64> },
    #[error("state has {got} values for a graph of {expected} nodes")]
    StateLength { expected: usize, got: usize },
}

/// Symmetric sparse adjacency plus the static node attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGraph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    interface: Vec<Interface>,
    kinds: Vec<GateKind>,
    inputs: Vec<usize>,
}

impl NetGraph {
    /// Graph with the given undirected edges; every node is a wire with a
    /// `BUFF` driver. Used for synthetic graphs.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> NetGraph {
        NetGraph::assemble(n, edges.iter().copied(), vec![Interface::Wire; n], vec![GateKind::Buff; n])
    }

    fn assemble(
        n: usize,
        edges: impl Iterator<Item = (usize, usize)>,
        interface: Vec<Interface>,
        kinds: Vec<GateKind>,
    ) -> NetGraph {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (u, v) in edges {
            if u == v {
                continue;
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for mut list in adj {
            list.sort_unstable();
            list.dedup();
            neighbors.extend(list);
            offsets.push(neighbors.len());
        }
        let inputs = (0..n).filter(|&v| interface[v] == Interface::PrimaryInput).collect();
        NetGraph { offsets, neighbors, interface, kinds, inputs }
    }

    pub fn node_count(&self) -> usize {
        self.interface.len()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn interface(&self, v: usize) -> Interface {
        self.interface[v]
    }

    pub fn kind(&self, v: usize) -> GateKind {
        self.kinds[v]
    }

    /// Primary-input nodes in seed bit order.
    pub fn inputs(&self) -> &[usize] {
        &self.inputs
    }

    pub fn is_input(&self, v: usize) -> bool {
        self.interface[v] == Interface::PrimaryInput
    }

    /// Edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.node_count())
            .flat_map(|u| self.neighbors(u).iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
            .collect()
    }

    /// One `u v` line per edge.
    pub fn edge_list_text(&self) -> String {
        self.edges().iter().map(|(u, v)| format!("{u} {v}\n")).collect()
    }
}

pub fn build_graph(netlist: &Netlist) -> NetGraph {
    let n = netlist.len();
    let edges = netlist.nets().iter().flat_map(|net| net.driver.fanin.iter().map(move |&f| (f, net.id)));
    let interface = netlist.nets().iter().map(|net| net.interface).collect();
    let kinds = netlist.nets().iter().map(|net| net.driver.op.encoded_kind()).collect();
    let mut graph = NetGraph::assemble(n, edges, interface, kinds);
    graph.inputs = netlist.input_ids().to_vec();
    graph
}

/// Where the logic-value segment of the features comes from.
#[derive(Debug, Clone, Copy)]
pub enum LogicSource<'a> {
    /// Every node shows its value.
    Full(&'a [LogicValue]),
    /// Only primary inputs show their value; everything else reads `X`.
    InputsOnly(&'a [LogicValue]),
}

/// `n x 17` one-hot features: interface (input/wire/output), driver gate
/// kind, logic value (0/1/X/Z).
pub fn encode_features(graph: &NetGraph, source: LogicSource<'_>) -> Result<Tensor2, GraphError> {
    let n = graph.node_count();
    let (values, inputs_only) = match source {
        LogicSource::Full(v) => (v, false),
        LogicSource::InputsOnly(v) => (v, true),
    };
    if values.len() != n {
        return Err(GraphError::StateLength { expected: n, got: values.len() });
    }
    let mut out = Tensor2::zeros(n, FEATURE_WIDTH);
    for v in 0..n {
        let row = out.row_mut(v);
        row[graph.interface(v) as usize] = 1.0;
        row[GATE_OFFSET + graph.kind(v).index()] = 1.0;
        let value = if inputs_only && !graph.is_input(v) { LogicValue::LX } else { values[v] };
        row[LOGIC_OFFSET + value.class() as usize] = 1.0;
    }
    Ok(out)
}

/// `D^-1/2 (A + I) D^-1/2` in CSR form, with `d` the row sums of `A + I`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    n: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

pub fn normalized_adjacency(graph: &NetGraph) -> NormalizedAdjacency {
    let n = graph.node_count();
    let d: Vec<usize> = (0..n).map(|v| graph.degree(v) + 1).collect();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(graph.neighbors.len() + n);
    let mut vals = Vec::with_capacity(graph.neighbors.len() + n);
    offsets.push(0);
    for i in 0..n {
        let mut placed_self = false;
        for &j in graph.neighbors(i) {
            if !placed_self && j > i {
                cols.push(i);
                vals.push(1.0 / d[i] as f64);
                placed_self = true;
            }
            cols.push(j);
            vals.push(1.0 / ((d[i] * d[j]) as f64).sqrt());
        }
        if !placed_self {
            cols.push(i);
            vals.push(1.0 / d[i] as f64);
        }
        offsets.push(cols.len());
    }
    NormalizedAdjacency { n, offsets, cols, vals }
}

impl NormalizedAdjacency {
    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Stored entries of row `i` as `(column, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[i]..self.offsets[i + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map(|(_, v)| v).unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Tensor2 {
        let mut t = Tensor2::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                t[(i, j)] = v;
            }
        }
        t
    }

    /// `Â · h` where `h` stacks one or more `n`-row blocks; every block is
    /// multiplied independently (block-diagonal batch).
    pub fn apply(&self, h: &Tensor2) -> Tensor2 {
        assert!(self.n > 0 && h.rows().is_multiple_of(self.n), "row count must be a multiple of the node count");
        let cols = h.cols();
        let mut out = Tensor2::zeros(h.rows(), cols);
        for block in 0..h.rows() / self.n {
            let base = block * self.n;
            for i in 0..self.n {
                let dst = (base + i) * cols;
                for (j, a) in self.row(i) {
                    let src = &h.data()[(base + j) * cols..(base + j + 1) * cols];
                    let out_row = &mut out.data_mut()[dst..dst + cols];
                    for (o, &s) in out_row.iter_mut().zip(src) {
                        *o += a * s;
                    }
                }
            }
        }
        out
    }
}

pub fn degree_centrality(graph: &NetGraph) -> Vec<f64> {
    let n = graph.node_count();
    if n <= 1 {
        return vec![0.0; n];
    }
    (0..n).map(|v| graph.degree(v) as f64 / (n - 1) as f64).collect()
}

/// Brandes' algorithm, undirected, normalized by `2 / ((n-1)(n-2))`.
pub fn betweenness_centrality(graph: &NetGraph) -> Vec<f64> {
    let n = graph.node_count();
    let mut bc = vec![0.0; n];
    if n <= 2 {
        return bc;
    }
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![usize::MAX; n];
    let mut delta = vec![0.0f64; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::with_capacity(n);
    for s in 0..n {
        sigma.iter_mut().for_each(|x| *x = 0.0);
        dist.iter_mut().for_each(|x| *x = usize::MAX);
        delta.iter_mut().for_each(|x| *x = 0.0);
        order.clear();
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in graph.neighbors(v) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                }
            }
        }
        for &w in order.iter().rev() {
            for &v in graph.neighbors(w) {
                if dist[v] != usize::MAX && dist[v] + 1 == dist[w] {
                    delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
                }
            }
            if w != s {
                bc[w] += delta[w];
            }
        }
    }
    // Each unordered pair was counted from both ends.
    let scale = 1.0 / ((n - 1) * (n - 2)) as f64;
    bc.iter_mut().for_each(|x| *x *= scale);
    bc
}

/// Closeness with the Wasserman-Faust correction:
/// `((r-1)/(n-1)) * ((r-1)/sum_dist)` where `r` counts reachable nodes
/// including the source.
pub fn closeness_centrality(graph: &NetGraph) -> Vec<f64> {
    let n = graph.node_count();
    let mut out = vec![0.0; n];
    if n <= 1 {
        return out;
    }
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::with_capacity(n);
    for (s, slot) in out.iter_mut().enumerate() {
        dist.iter_mut().for_each(|x| *x = usize::MAX);
        dist[s] = 0;
        queue.push_back(s);
        let mut total = 0usize;
        let mut reached = 1usize;
        while let Some(v) = queue.pop_front() {
            for &w in graph.neighbors(v) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    total += dist[w];
                    reached += 1;
                    queue.push_back(w);
                }
            }
        }
        if total > 0 {
            let r = (reached - 1) as f64;
            *slot = (r / (n - 1) as f64) * (r / total as f64);
        }
    }
    out
}

/// Outcome of the power iteration; `converged` is false when the iteration
/// cap was hit and `values` is the last iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenvectorResult {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration on `A + I` (same eigenvectors as `A`, no oscillation on
/// bipartite graphs) from a uniform start, L2-normalized. Stops when the L1
/// change drops below `n * tol`.
pub fn eigenvector_power_iteration(graph: &NetGraph, max_iter: usize, tol: f64) -> EigenvectorResult {
    let n = graph.node_count();
    if n == 0 {
        return EigenvectorResult { values: Vec::new(), iterations: 0, converged: true };
    }
    if graph.edge_count() == 0 {
        let u = 1.0 / (n as f64).sqrt();
        return EigenvectorResult { values: vec![u; n], iterations: 0, converged: true };
    }
    let mut x = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for it in 1..=max_iter {
        for v in 0..n {
            next[v] = x[v] + graph.neighbors(v).iter().map(|&w| x[w]).sum::<f64>();
        }
        let norm = next.iter().map(|a| a * a).sum::<f64>().sqrt();
        next.iter_mut().for_each(|a| *a /= norm);
        let change: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if change < n as f64 * tol {
            return EigenvectorResult { values: x, iterations: it, converged: true };
        }
    }
    EigenvectorResult { values: x, iterations: max_iter, converged: false }
}

pub fn eigenvector_centrality(graph: &NetGraph) -> Result<Vec<f64>, GraphError> {
    let r = eigenvector_power_iteration(graph, EIGENVECTOR_MAX_ITER, EIGENVECTOR_TOL);
    if r.converged {
        Ok(r.values)
    } else {
        Err(GraphError::EigenvectorNoConvergence { iterations: r.iterations, last: r.values })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CentralityKind {
    Degree,
    Betweenness,
    Closeness,
    #[default]
    Eigenvector,
}

/// Per-node values of one metric. A non-converged eigenvector run yields its
/// last iterate.
pub fn centrality(graph: &NetGraph, kind: CentralityKind) -> Vec<f64> {
    match kind {
        CentralityKind::Degree => degree_centrality(graph),
        CentralityKind::Betweenness => betweenness_centrality(graph),
        CentralityKind::Closeness => closeness_centrality(graph),
        CentralityKind::Eigenvector => {
            let r = eigenvector_power_iteration(graph, EIGENVECTOR_MAX_ITER, EIGENVECTOR_TOL);
            if !r.converged {
                log::warn!("eigenvector centrality stopped after {} iterations without converging", r.iterations);
            }
            r.values
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralityReport {
    #[serde(rename = "# of Nodes")]
    pub nodes: usize,
    #[serde(rename = "# of Edges")]
    pub edges: usize,
    #[serde(rename = "Degree Centrality")]
    pub degree: f64,
    #[serde(rename = "Betweenness")]
    pub betweenness: f64,
    #[serde(rename = "Closeness")]
    pub closeness: f64,
    #[serde(rename = "Eigenvector")]
    pub eigenvector: f64,
    #[serde(rename = "Average Degree")]
    pub average_degree: f64,
    pub eigenvector_converged: bool,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub fn centrality_report(graph: &NetGraph) -> CentralityReport {
    let n = graph.node_count();
    let eig = eigenvector_power_iteration(graph, EIGENVECTOR_MAX_ITER, EIGENVECTOR_TOL);
    CentralityReport {
        nodes: n,
        edges: graph.edge_count(),
        degree: mean(&degree_centrality(graph)),
        betweenness: mean(&betweenness_centrality(graph)),
        closeness: mean(&closeness_centrality(graph)),
        eigenvector: mean(&eig.values),
        average_degree: if n == 0 { 0.0 } else { 2.0 * graph.edge_count() as f64 / n as f64 },
        eigenvector_converged: eig.converged,
    }
}
