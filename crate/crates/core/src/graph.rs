//! Immutable attributed graphs, the deletion operator and k-hop neighborhoods.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::request::UnlearnRequest;

/// Undirected edge; stored canonically with `0 <= 1`.
pub type Edge = (usize, usize);

pub fn canonical_edge((u, v): Edge) -> Edge {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Sorted, deduplicated set of node ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeSet(Vec<usize>);

impl NodeSet {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn from_sorted_unchecked(ids: Vec<usize>) -> Self {
        debug_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        Self(ids)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.0.binary_search(&v).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn union(&self, other: &NodeSet) -> NodeSet {
        let mut out = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.0, &other.0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(a[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        NodeSet(out)
    }

    pub fn intersection(&self, other: &NodeSet) -> NodeSet {
        NodeSet(self.iter().filter(|&v| other.contains(v)).collect())
    }

    pub fn difference(&self, other: &NodeSet) -> NodeSet {
        NodeSet(self.iter().filter(|&v| !other.contains(v)).collect())
    }

    pub fn filter(&self, mut keep: impl FnMut(usize) -> bool) -> NodeSet {
        NodeSet(self.iter().filter(|&v| keep(v)).collect())
    }

    pub fn is_disjoint(&self, other: &NodeSet) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return false,
            }
        }
        true
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.iter().all(|v| other.contains(v))
    }
}

impl FromIterator<usize> for NodeSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut v: Vec<usize> = iter.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        NodeSet(v)
    }
}

/// Attributed, undirected graph with CSR adjacency and train/test masks.
///
/// Node ids are stable: nodes removed by [`delete`] stay in place as
/// isolated, zero-featured placeholders with both mask bits cleared.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    features: Matrix,
    labels: Vec<usize>,
    train_mask: Vec<bool>,
    test_mask: Vec<bool>,
    removed: Vec<bool>,
    num_classes: usize,
}

impl AttributedGraph {
    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.col_indices.len() / 2
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn train_mask(&self) -> &[bool] {
        &self.train_mask
    }

    pub fn test_mask(&self) -> &[bool] {
        &self.test_mask
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn is_removed(&self, v: usize) -> bool {
        self.removed[v]
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[v]..self.row_offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.row_offsets[v + 1] - self.row_offsets[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.num_nodes() && v < self.num_nodes() && self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Canonical edge list, each undirected edge once with `u < v`.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::with_capacity(self.num_edges());
        for u in 0..self.num_nodes() {
            for &v in self.neighbors(u) {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn train_nodes(&self) -> NodeSet {
        NodeSet((0..self.num_nodes()).filter(|&v| self.train_mask[v]).collect())
    }

    pub fn test_nodes(&self) -> NodeSet {
        NodeSet((0..self.num_nodes()).filter(|&v| self.test_mask[v]).collect())
    }

    pub fn num_train(&self) -> usize {
        self.train_mask.iter().filter(|&&b| b).count()
    }

    pub fn check_node(&self, v: usize) -> Result<()> {
        if v < self.num_nodes() {
            Ok(())
        } else {
            Err(Error::InvalidNode {
                node: v,
                num_nodes: self.num_nodes(),
            })
        }
    }

    /// Same graph with `train_mask` replaced; used by oracle experiments.
    pub fn with_train_mask(&self, train_mask: Vec<bool>) -> Result<Self> {
        if train_mask.len() != self.num_nodes() {
            return Err(Error::DimensionMismatch {
                expected: self.num_nodes(),
                got: train_mask.len(),
            });
        }
        if train_mask.iter().zip(&self.test_mask).any(|(a, b)| *a && *b) {
            return Err(Error::InvalidGraph("train and test masks overlap".into()));
        }
        let mut g = self.clone();
        g.train_mask = train_mask;
        Ok(g)
    }

    /// Same topology and labels with a different feature matrix.
    pub fn with_features(&self, features: Matrix) -> Result<Self> {
        if features.rows() != self.num_nodes() {
            return Err(Error::DimensionMismatch {
                expected: self.num_nodes(),
                got: features.rows(),
            });
        }
        let mut g = self.clone();
        g.features = features;
        Ok(g)
    }
}

/// Single-owner construction phase for [`AttributedGraph`].
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    features: Matrix,
    labels: Vec<usize>,
    train_mask: Vec<bool>,
    test_mask: Vec<bool>,
    num_classes: usize,
    edges: Vec<Edge>,
}

impl GraphBuilder {
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: usize) -> Self {
        let n = labels.len();
        Self {
            features,
            labels,
            train_mask: vec![false; n],
            test_mask: vec![false; n],
            num_classes,
            edges: Vec::new(),
        }
    }

    pub fn masks(mut self, train_mask: Vec<bool>, test_mask: Vec<bool>) -> Self {
        self.train_mask = train_mask;
        self.test_mask = test_mask;
        self
    }

    pub fn edge(mut self, u: usize, v: usize) -> Self {
        self.edges.push((u, v));
        self
    }

    pub fn edges(mut self, edges: impl IntoIterator<Item = Edge>) -> Self {
        self.edges.extend(edges);
        self
    }

    /// Validates and freezes the graph. Returns load warnings alongside.
    pub fn build(self) -> Result<(AttributedGraph, Vec<String>)> {
        let n = self.labels.len();
        let mut warnings = Vec::new();
        if self.features.rows() != n {
            return Err(Error::InvalidGraph(format!(
                "feature matrix has {} rows for {} nodes",
                self.features.rows(),
                n
            )));
        }
        if self.train_mask.len() != n || self.test_mask.len() != n {
            return Err(Error::InvalidGraph("mask length mismatch".into()));
        }
        if let Some(v) = (0..n).find(|&v| self.train_mask[v] && self.test_mask[v]) {
            return Err(Error::InvalidGraph(format!(
                "node {v} is in both the train and the test split"
            )));
        }
        if let Some((v, &l)) = self
            .labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l >= self.num_classes)
        {
            return Err(Error::InvalidGraph(format!(
                "node {v} has label {l} but there are {} classes",
                self.num_classes
            )));
        }
        if !crate::linalg::all_finite(self.features.as_slice()) {
            return Err(Error::InvalidGraph("non-finite feature value".into()));
        }

        let mut directed = BTreeSet::new();
        for &(u, v) in &self.edges {
            for x in [u, v] {
                if x >= n {
                    return Err(Error::InvalidNode {
                        node: x,
                        num_nodes: n,
                    });
                }
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop on node {u}")));
            }
            directed.insert((u, v));
        }
        let one_way = directed
            .iter()
            .filter(|&&(u, v)| !directed.contains(&(v, u)))
            .count();
        if one_way > 0 {
            warnings.push(format!(
                "symmetrized {one_way} edge(s) listed in one direction only"
            ));
        }
        let undirected: BTreeSet<Edge> = directed.iter().map(|&e| canonical_edge(e)).collect();
        let listed = self.edges.len();
        let distinct_directed = directed.len();
        if distinct_directed < listed {
            warnings.push(format!(
                "collapsed {} duplicate edge row(s)",
                listed - distinct_directed
            ));
        }

        let (row_offsets, col_indices) = csr_from_edges(n, undirected.iter().copied());
        Ok((
            AttributedGraph {
                row_offsets,
                col_indices,
                features: self.features,
                labels: self.labels,
                train_mask: self.train_mask,
                test_mask: self.test_mask,
                removed: vec![false; n],
                num_classes: self.num_classes,
            },
            warnings,
        ))
    }
}

fn csr_from_edges(n: usize, edges: impl Iterator<Item = Edge>) -> (Vec<usize>, Vec<usize>) {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::new();
    row_offsets.push(0);
    for mut row in adj {
        row.sort_unstable();
        row.dedup();
        col_indices.extend(row);
        row_offsets.push(col_indices.len());
    }
    (row_offsets, col_indices)
}

/// Nodes at shortest-path distance `1..=k` from `v` (the computation graph of
/// a k-layer message-passing model, excluding `v` itself).
pub fn k_hop_neighbors(g: &AttributedGraph, v: usize, k: usize) -> Result<NodeSet> {
    g.check_node(v)?;
    let mut dist = vec![usize::MAX; g.num_nodes()];
    dist[v] = 0;
    let mut queue = VecDeque::from([v]);
    let mut found = Vec::new();
    while let Some(u) = queue.pop_front() {
        if dist[u] == k {
            continue;
        }
        for &w in g.neighbors(u) {
            if dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                found.push(w);
                queue.push_back(w);
            }
        }
    }
    Ok(found.into_iter().collect())
}

/// Union of `k_hop_neighbors` over `sources`.
pub fn k_hop_union(g: &AttributedGraph, sources: &NodeSet, k: usize) -> Result<NodeSet> {
    let mut acc = NodeSet::new();
    for v in sources.iter() {
        acc = acc.union(&k_hop_neighbors(g, v, k)?);
    }
    Ok(acc)
}

/// Endpoints of the given edges.
pub fn edge_endpoints(edges: &[Edge]) -> NodeSet {
    edges.iter().flat_map(|&(u, v)| [u, v]).collect()
}

/// Distinct owners of `(node, dim)` attribute entries.
pub fn attribute_owners(g: &AttributedGraph, entries: &[(usize, usize)]) -> Result<NodeSet> {
    for &(v, dim) in entries {
        g.check_node(v)?;
        if dim >= g.feature_dim() {
            return Err(Error::InvalidAttribute {
                node: v,
                dim,
                feature_dim: g.feature_dim(),
            });
        }
    }
    Ok(entries.iter().map(|&(v, _)| v).collect())
}

/// Result of applying the deletion operator.
#[derive(Debug, Clone)]
pub struct Deletion {
    pub graph: AttributedGraph,
    /// Entities that were already gone; deleting them again is a no-op.
    pub warnings: Vec<String>,
}

/// `G ⊖ ΔG`: removes the request's nodes (with their incident edges and
/// attributes), its edges, and overwrites its attribute entries with `0.0`.
pub fn delete(g: &AttributedGraph, req: &UnlearnRequest) -> Result<Deletion> {
    let n = g.num_nodes();
    let d = g.feature_dim();
    let mut warnings = Vec::new();
    let mut out = g.clone();

    for v in req.nodes.iter() {
        g.check_node(v)?;
    }
    for &(u, v) in &req.edges {
        g.check_node(u)?;
        g.check_node(v)?;
    }
    for v in req.attrs_full.iter() {
        g.check_node(v)?;
    }
    for p in &req.attrs_partial {
        g.check_node(p.node)?;
        if let Some(&dim) = p.dims.iter().find(|&&dim| dim >= d) {
            return Err(Error::InvalidAttribute {
                node: p.node,
                dim,
                feature_dim: d,
            });
        }
    }

    let mut drop_edges: BTreeSet<Edge> = BTreeSet::new();
    for &e in &req.edges {
        let (u, v) = canonical_edge(e);
        if g.has_edge(u, v) {
            drop_edges.insert((u, v));
        } else {
            warnings.push(format!("edge ({u}, {v}) not present; skipped"));
        }
    }

    for v in req.nodes.iter() {
        if g.removed[v] {
            warnings.push(format!("node {v} already removed; skipped"));
            continue;
        }
        out.removed[v] = true;
        out.train_mask[v] = false;
        out.test_mask[v] = false;
        out.features.row_mut(v).fill(0.0);
        for &w in g.neighbors(v) {
            drop_edges.insert(canonical_edge((v, w)));
        }
    }

    for v in req.attrs_full.iter() {
        out.features.row_mut(v).fill(0.0);
    }
    for p in &req.attrs_partial {
        let row = out.features.row_mut(p.node);
        for &dim in &p.dims {
            row[dim] = 0.0;
        }
    }

    if !drop_edges.is_empty() {
        let kept = g
            .edges()
            .into_iter()
            .filter(|e| !drop_edges.contains(e));
        let (row_offsets, col_indices) = csr_from_edges(n, kept);
        out.row_offsets = row_offsets;
        out.col_indices = col_indices;
    }

    Ok(Deletion {
        graph: out,
        warnings,
    })
}
