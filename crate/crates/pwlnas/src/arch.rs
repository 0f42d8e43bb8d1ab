//! Cell architectures: a small DAG with one operation label per node.
//!
//! Node 0 is the input, node `num_nodes - 1` the output, and the adjacency
//! matrix is strictly upper-triangular so node order is already topological.
//! Spaces where only the operation labels vary (a fixed wiring shared by the
//! whole benchmark) and spaces where the wiring varies too are both expressed
//! through [`SpaceSpec::edge_rule`].

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::Rng;

/// Whether mutation may rewire edges or only relabel operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeRule {
    /// Both edges and operations vary.
    #[serde(rename = "dense-dag")]
    DenseDag,
    /// The wiring is fixed for the whole space; only operations vary.
    #[serde(rename = "fixed-graph-ops-only")]
    FixedGraphOpsOnly,
}

impl std::fmt::Display for EdgeRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EdgeRule::DenseDag => write!(f, "dense-dag"),
            EdgeRule::FixedGraphOpsOnly => write!(f, "fixed-graph-ops-only"),
        }
    }
}

impl std::str::FromStr for EdgeRule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dense-dag" => Ok(EdgeRule::DenseDag),
            "fixed-graph-ops-only" => Ok(EdgeRule::FixedGraphOpsOnly),
            other => Err(format!(
                "unknown edge rule {other:?}, expected dense-dag or fixed-graph-ops-only"
            )),
        }
    }
}

/// Parameters of a cell search space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub max_nodes: usize,
    /// Ordered operation vocabulary; one-hot encoding follows this order.
    pub op_vocabulary: Vec<String>,
    pub edge_rule: EdgeRule,
}

impl SpaceSpec {
    pub fn new(max_nodes: usize, op_vocabulary: Vec<String>, edge_rule: EdgeRule) -> Self {
        assert!(max_nodes >= 2, "a space needs at least input and output nodes");
        assert!(!op_vocabulary.is_empty(), "op vocabulary must be non-empty");
        Self { max_nodes, op_vocabulary, edge_rule }
    }

    /// Space with vocabulary `op0..op{n-1}`, handy for synthetic benchmarks.
    pub fn with_generated_vocab(max_nodes: usize, vocab_size: usize, edge_rule: EdgeRule) -> Self {
        let vocab = (0..vocab_size).map(|i| format!("op{i}")).collect();
        Self::new(max_nodes, vocab, edge_rule)
    }

    pub fn op_index(&self, label: &str) -> Option<usize> {
        self.op_vocabulary.iter().position(|v| v == label)
    }

    /// Input length of a flattened encoding padded to `max_nodes`.
    pub fn flat_len(&self) -> usize {
        self.max_nodes * (self.max_nodes + self.op_vocabulary.len())
    }
}

/// A cell: strictly upper-triangular adjacency plus per-node operation labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    num_nodes: usize,
    /// Row-major `num_nodes x num_nodes`; `adjacency[i*n + j]` is edge i -> j.
    adjacency: Vec<bool>,
    ops: Vec<String>,
}

impl Architecture {
    pub fn new(num_nodes: usize, adjacency: Vec<bool>, ops: Vec<String>) -> Self {
        assert_eq!(adjacency.len(), num_nodes * num_nodes, "adjacency must be n*n");
        assert_eq!(ops.len(), num_nodes, "one op label per node");
        Self { num_nodes, adjacency, ops }
    }

    /// Chain `0 -> 1 -> ... -> n-1` with the given ops.
    pub fn chain(ops: Vec<String>) -> Self {
        let n = ops.len();
        let mut adjacency = vec![false; n * n];
        for i in 0..n.saturating_sub(1) {
            adjacency[i * n + (i + 1)] = true;
        }
        Self::new(n, adjacency, ops)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn ops(&self) -> &[String] {
        &self.ops
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.adjacency[from * self.num_nodes + to]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.num_nodes;
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| self.has_edge(i, j))
    }

    /// Row-major 0/1 view of the adjacency matrix.
    pub fn adjacency_bits(&self) -> impl Iterator<Item = u8> + '_ {
        self.adjacency.iter().map(|&b| b as u8)
    }

    fn set_edge(&mut self, from: usize, to: usize, present: bool) {
        self.adjacency[from * self.num_nodes + to] = present;
    }

    fn reachable_from_input(&self) -> Vec<bool> {
        let n = self.num_nodes;
        let mut reach = vec![false; n];
        reach[0] = true;
        // Node order is topological for an upper-triangular matrix.
        for j in 1..n {
            reach[j] = (0..j).any(|i| reach[i] && self.has_edge(i, j));
        }
        reach
    }

    fn coreachable_to_output(&self) -> Vec<bool> {
        let n = self.num_nodes;
        let mut reach = vec![false; n];
        reach[n - 1] = true;
        for i in (0..n - 1).rev() {
            reach[i] = (i + 1..n).any(|j| reach[j] && self.has_edge(i, j));
        }
        reach
    }
}

/// One violated invariant, as found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationIssue {
    /// num_nodes outside `[2, max_nodes]`.
    NodeCount { got: usize, max: usize },
    /// An entry on or below the diagonal is set.
    NotUpperTriangular { from: usize, to: usize },
    /// ops length differs from num_nodes.
    OpsLength { got: usize, expected: usize },
    /// An op label outside the space vocabulary.
    UnknownOp { node: usize, label: String },
    /// An intermediate node with no path from input through it to output.
    NodeOffPath { node: usize },
    /// The output node cannot be reached from the input node.
    NoInputOutputPath,
}

impl std::fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ValidationIssue::NodeCount { got, max } => {
                write!(f, "node count {got} outside [2, {max}]")
            }
            ValidationIssue::NotUpperTriangular { from, to } => {
                write!(f, "edge {from}->{to} not upper-triangular")
            }
            ValidationIssue::OpsLength { got, expected } => {
                write!(f, "ops length {got}, expected {expected}")
            }
            ValidationIssue::UnknownOp { node, label } => {
                write!(f, "unknown op {label:?} at node {node}")
            }
            ValidationIssue::NodeOffPath { node } => {
                write!(f, "node {node} not on any input-output path")
            }
            ValidationIssue::NoInputOutputPath => write!(f, "no input-output path"),
        }
    }
}

/// Report-style validation result; empty issue list means valid.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ArchError {
    /// No single-change neighbor of the architecture is valid.
    #[error("no valid single-step mutation exists")]
    NoValidMutation,
}

/// Check every architecture invariant against a space, reporting all
/// violations rather than stopping at the first.
pub fn validate(arch: &Architecture, spec: &SpaceSpec) -> ValidationReport {
    let mut issues = Vec::new();
    let n = arch.num_nodes;

    if n < 2 || n > spec.max_nodes {
        issues.push(ValidationIssue::NodeCount { got: n, max: spec.max_nodes });
    }
    for i in 0..n {
        for j in 0..=i.min(n - 1) {
            if arch.adjacency[i * n + j] {
                issues.push(ValidationIssue::NotUpperTriangular { from: i, to: j });
            }
        }
    }
    if arch.ops.len() != n {
        issues.push(ValidationIssue::OpsLength { got: arch.ops.len(), expected: n });
    }
    for (node, label) in arch.ops.iter().enumerate() {
        if spec.op_index(label).is_none() {
            issues.push(ValidationIssue::UnknownOp { node, label: label.clone() });
        }
    }

    if n >= 2 {
        let reach = arch.reachable_from_input();
        let coreach = arch.coreachable_to_output();
        for node in 1..n - 1 {
            if !(reach[node] && coreach[node]) {
                issues.push(ValidationIssue::NodeOffPath { node });
            }
        }
        if !reach[n - 1] {
            issues.push(ValidationIssue::NoInputOutputPath);
        }
    }

    ValidationReport { issues }
}

/// All single changes applicable to `arch` under the space's edge rule:
/// every op relabeling, plus every edge toggle for dense-DAG spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Change {
    SetOp { node: usize, vocab_idx: usize },
    ToggleEdge { from: usize, to: usize },
}

fn enumerate_changes(arch: &Architecture, spec: &SpaceSpec) -> Vec<Change> {
    let n = arch.num_nodes;
    let mut changes = Vec::new();
    for node in 0..n {
        for (vocab_idx, label) in spec.op_vocabulary.iter().enumerate() {
            if label != &arch.ops[node] {
                changes.push(Change::SetOp { node, vocab_idx });
            }
        }
    }
    if spec.edge_rule == EdgeRule::DenseDag {
        for from in 0..n {
            for to in from + 1..n {
                changes.push(Change::ToggleEdge { from, to });
            }
        }
    }
    changes
}

fn apply_change(arch: &Architecture, spec: &SpaceSpec, change: Change) -> Architecture {
    let mut out = arch.clone();
    match change {
        Change::SetOp { node, vocab_idx } => {
            out.ops[node] = spec.op_vocabulary[vocab_idx].clone();
        }
        Change::ToggleEdge { from, to } => {
            let present = out.has_edge(from, to);
            out.set_edge(from, to, !present);
        }
    }
    out
}

/// Produce a valid architecture at edit distance exactly one from `arch`
/// (one op relabeled, or one edge toggled in dense-DAG spaces).
///
/// Candidate changes are tried in a seeded random order; invalid results are
/// rejected until a valid one is found. Exhausting every candidate yields
/// [`ArchError::NoValidMutation`].
pub fn mutate(arch: &Architecture, spec: &SpaceSpec, rng: &mut Rng) -> Result<Architecture, ArchError> {
    let mut changes = enumerate_changes(arch, spec);
    changes.shuffle(rng);
    for change in changes {
        let candidate = apply_change(arch, spec, change);
        if validate(&candidate, spec).is_valid() {
            return Ok(candidate);
        }
    }
    Err(ArchError::NoValidMutation)
}

/// Enumerate every valid architecture at edit distance exactly one from
/// `arch`, in a deterministic order (op relabels by node then vocab, then
/// edge toggles by row-major slot).
pub fn neighbors(arch: &Architecture, spec: &SpaceSpec) -> Vec<Architecture> {
    enumerate_changes(arch, spec)
        .into_iter()
        .map(|change| apply_change(arch, spec, change))
        .filter(|candidate| validate(candidate, spec).is_valid())
        .collect()
}

/// Edit distance over the union of edge slots and op slots. Architectures of
/// different size are at distance `usize::MAX`.
pub fn edit_distance(a: &Architecture, b: &Architecture) -> usize {
    if a.num_nodes != b.num_nodes {
        return usize::MAX;
    }
    let edge_diff = a
        .adjacency
        .iter()
        .zip(&b.adjacency)
        .filter(|(x, y)| x != y)
        .count();
    let op_diff = a.ops.iter().zip(&b.ops).filter(|(x, y)| x != y).count();
    edge_diff + op_diff
}

/// Encoded view of an architecture for the predictor backbones.
#[derive(Debug, Clone)]
pub struct EncodedArch {
    /// One-hot op labels, `num_nodes x vocab`.
    pub features: Array2<f64>,
    /// Symmetrically normalized adjacency with self-loops,
    /// `D^{-1/2} (A + A^T + I) D^{-1/2}`.
    pub norm_adjacency: Array2<f64>,
    /// Row-major one-hot features followed by row-major raw adjacency;
    /// length `num_nodes * (vocab + num_nodes)`.
    pub flat: Array1<f64>,
}

/// Encode an architecture for the predictor: one-hot features, normalized
/// adjacency for graph convolutions, and a flat vector for MLP input.
///
/// Callers are expected to pass architectures that already validate; unknown
/// op labels get an all-zero feature row.
pub fn encode(arch: &Architecture, spec: &SpaceSpec) -> EncodedArch {
    let n = arch.num_nodes;
    let v = spec.op_vocabulary.len();

    let mut features = Array2::zeros((n, v));
    for (node, label) in arch.ops.iter().enumerate() {
        if let Some(idx) = spec.op_index(label) {
            features[(node, idx)] = 1.0;
        }
    }

    // M = A + A^T + I. A is strictly upper-triangular so entries stay 0/1.
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        m[(i, i)] = 1.0;
    }
    for (i, j) in arch.edges() {
        m[(i, j)] = 1.0;
        m[(j, i)] = 1.0;
    }
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = m.row(i).sum();
            1.0 / d.sqrt()
        })
        .collect();
    let mut norm_adjacency = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            norm_adjacency[(i, j)] = m[(i, j)] * inv_sqrt_deg[i] * inv_sqrt_deg[j];
        }
    }

    let mut flat = Array1::zeros(n * (v + n));
    let mut k = 0;
    for node in 0..n {
        for idx in 0..v {
            flat[k] = features[(node, idx)];
            k += 1;
        }
    }
    for bit in arch.adjacency_bits() {
        flat[k] = bit as f64;
        k += 1;
    }

    EncodedArch { features, norm_adjacency, flat }
}

/// Deterministic serialization of an architecture, used as the benchmark
/// lookup key. Equal `(adjacency, ops)` pairs give equal keys; isomorphic but
/// differently ordered graphs may give different keys by design, since
/// tabular benchmarks key architectures by their stored encoding.
pub fn canonical_key(arch: &Architecture) -> String {
    let mut key = String::with_capacity(arch.num_nodes * (arch.num_nodes + 8));
    key.push_str(&arch.num_nodes.to_string());
    key.push(':');
    for bit in arch.adjacency_bits() {
        key.push(if bit == 1 { '1' } else { '0' });
    }
    key.push(':');
    for (i, op) in arch.ops.iter().enumerate() {
        if i > 0 {
            key.push('|');
        }
        key.push_str(op);
    }
    key
}

/// Sample a valid architecture with `spec.max_nodes` nodes uniformly in ops
/// (and, for dense-DAG spaces, rejection-sampled over edge sets).
pub fn sample_valid(spec: &SpaceSpec, rng: &mut Rng) -> Architecture {
    let n = spec.max_nodes;
    loop {
        let ops: Vec<String> = (0..n)
            .map(|_| spec.op_vocabulary[rng.gen_range(0..spec.op_vocabulary.len())].clone())
            .collect();
        let arch = match spec.edge_rule {
            EdgeRule::FixedGraphOpsOnly => Architecture::chain(ops),
            EdgeRule::DenseDag => {
                let mut adjacency = vec![false; n * n];
                for i in 0..n {
                    for j in i + 1..n {
                        adjacency[i * n + j] = rng.gen_bool(0.5);
                    }
                }
                Architecture::new(n, adjacency, ops)
            }
        };
        if validate(&arch, spec).is_valid() {
            return arch;
        }
    }
}

/// Number of distinct valid architectures with exactly `max_nodes` nodes, or
/// `None` when the edge-set count is too large to enumerate (treated as
/// effectively unbounded by callers).
pub fn space_size(spec: &SpaceSpec) -> Option<u128> {
    let n = spec.max_nodes;
    let v = spec.op_vocabulary.len() as u128;
    let op_tuples = v.checked_pow(n as u32)?;
    match spec.edge_rule {
        EdgeRule::FixedGraphOpsOnly => Some(op_tuples),
        EdgeRule::DenseDag => {
            let bits = n * (n - 1) / 2;
            if bits > 20 {
                return None;
            }
            let probe_ops = vec![spec.op_vocabulary[0].clone(); n];
            let mut valid_edge_sets: u128 = 0;
            for mask in 0u32..(1u32 << bits) {
                let mut adjacency = vec![false; n * n];
                let mut b = 0;
                for i in 0..n {
                    for j in i + 1..n {
                        adjacency[i * n + j] = (mask >> b) & 1 == 1;
                        b += 1;
                    }
                }
                let arch = Architecture::new(n, adjacency, probe_ops.clone());
                if validate(&arch, spec).is_valid() {
                    valid_edge_sets += 1;
                }
            }
            valid_edge_sets.checked_mul(op_tuples)
        }
    }
}
