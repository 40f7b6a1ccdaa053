//! Unlearning requests, their affected node sets, and the serial split used
//! when request categories overlap.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    canonical_edge, edge_endpoints, k_hop_neighbors, k_hop_union, AttributedGraph, Edge, NodeSet,
};

/// Partial attribute entry: `dims` of `node` are unlearned, at least one
/// dimension is retained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialAttr {
    pub node: usize,
    pub dims: Vec<usize>,
}

/// `ΔG = (ΔV, ΔE, ΔX)`. Edges and attributes of nodes in `nodes` are removed
/// implicitly and need not be listed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct UnlearnRequest {
    pub nodes: NodeSet,
    pub edges: Vec<Edge>,
    pub attrs_full: NodeSet,
    pub attrs_partial: Vec<PartialAttr>,
}

/// The four request categories, in the fixed serial order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Nodes,
    AttrsFull,
    AttrsPartial,
    Edges,
}

impl Category {
    pub const ORDER: [Category; 4] = [
        Category::Nodes,
        Category::AttrsFull,
        Category::AttrsPartial,
        Category::Edges,
    ];
}

impl UnlearnRequest {
    pub fn nodes(ids: impl IntoIterator<Item = usize>) -> Self {
        Self {
            nodes: ids.into_iter().collect(),
            ..Default::default()
        }
    }

    pub fn edges(edges: impl IntoIterator<Item = Edge>) -> Self {
        Self {
            edges: edges.into_iter().collect(),
            ..Default::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
            && self.edges.is_empty()
            && self.attrs_full.is_empty()
            && self.attrs_partial.is_empty()
    }

    /// α₁..α₄: node, full-attribute, partial-attribute and edge flags.
    pub fn alphas(&self) -> [bool; 4] {
        [
            !self.nodes.is_empty(),
            !self.attrs_full.is_empty(),
            !self.attrs_partial.is_empty(),
            !self.edges.is_empty(),
        ]
    }

    pub fn partial_owners(&self) -> NodeSet {
        self.attrs_partial.iter().map(|p| p.node).collect()
    }

    /// All explicitly listed `(node, dim)` attribute entries.
    pub fn attribute_entries(&self, feature_dim: usize) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self
            .attrs_full
            .iter()
            .flat_map(|v| (0..feature_dim).map(move |j| (v, j)))
            .collect();
        for p in &self.attrs_partial {
            out.extend(p.dims.iter().map(|&j| (p.node, j)));
        }
        out
    }

    /// Sub-request containing only one category.
    pub fn only(&self, cat: Category) -> UnlearnRequest {
        match cat {
            Category::Nodes => UnlearnRequest {
                nodes: self.nodes.clone(),
                ..Default::default()
            },
            Category::AttrsFull => UnlearnRequest {
                attrs_full: self.attrs_full.clone(),
                ..Default::default()
            },
            Category::AttrsPartial => UnlearnRequest {
                attrs_partial: self.attrs_partial.clone(),
                ..Default::default()
            },
            Category::Edges => UnlearnRequest {
                edges: self.edges.clone(),
                ..Default::default()
            },
        }
    }

    /// Drops entities that no longer exist in `g` (removed nodes, missing
    /// edges, attributes of removed nodes).
    pub fn restricted_to(&self, g: &AttributedGraph) -> UnlearnRequest {
        let alive = |v: usize| v < g.num_nodes() && !g.is_removed(v);
        UnlearnRequest {
            nodes: self.nodes.filter(alive),
            edges: self
                .edges
                .iter()
                .copied()
                .filter(|&(u, v)| g.has_edge(u, v))
                .collect(),
            attrs_full: self.attrs_full.filter(alive),
            attrs_partial: self
                .attrs_partial
                .iter()
                .filter(|p| alive(p.node))
                .cloned()
                .collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawRequest = serde_json::from_str(text)?;
        Ok(raw.into())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("request serializes")
    }
}

// Accepts unsorted / duplicated node lists from request files.
#[derive(Deserialize)]
#[serde(default)]
#[derive(Default)]
struct RawRequest {
    nodes: Vec<usize>,
    edges: Vec<Edge>,
    attrs_full: Vec<usize>,
    attrs_partial: Vec<PartialAttr>,
}

impl From<RawRequest> for UnlearnRequest {
    fn from(r: RawRequest) -> Self {
        UnlearnRequest {
            nodes: r.nodes.into_iter().collect(),
            edges: r.edges,
            attrs_full: r.attrs_full.into_iter().collect(),
            attrs_partial: r
                .attrs_partial
                .into_iter()
                .map(|mut p| {
                    p.dims.sort_unstable();
                    p.dims.dedup();
                    p
                })
                .collect(),
        }
    }
}

/// Every violated request invariant; empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidRequest(self.violations.join("; ")))
        }
    }
}

pub fn validate(g: &AttributedGraph, req: &UnlearnRequest) -> ValidationReport {
    let n = g.num_nodes();
    let d = g.feature_dim();
    let mut violations = Vec::new();
    for v in req.nodes.iter() {
        if v >= n {
            violations.push(format!("unknown node {v}"));
        }
    }
    for &(u, v) in &req.edges {
        if u >= n || v >= n {
            violations.push(format!("unknown edge ({u}, {v}): node out of range"));
        } else if u == v {
            violations.push(format!("unknown edge ({u}, {v}): self-loop"));
        } else if !g.has_edge(u, v) {
            violations.push(format!("unknown edge ({u}, {v})"));
        }
    }
    let mut seen_edges: Vec<Edge> = req.edges.iter().map(|&e| canonical_edge(e)).collect();
    seen_edges.sort_unstable();
    if seen_edges.windows(2).any(|w| w[0] == w[1]) {
        violations.push("duplicate edge in request".into());
    }
    for v in req.attrs_full.iter() {
        if v >= n {
            violations.push(format!("unknown node {v} in attrs_full"));
        }
    }
    let mut partial_nodes = Vec::new();
    for p in &req.attrs_partial {
        if p.node >= n {
            violations.push(format!("unknown node {} in attrs_partial", p.node));
            continue;
        }
        partial_nodes.push(p.node);
        if p.dims.is_empty() {
            violations.push(format!("partial entry for node {} lists no dims", p.node));
        }
        if let Some(&dim) = p.dims.iter().find(|&&j| j >= d) {
            violations.push(format!(
                "partial entry for node {} has dim {dim} >= feature dim {d}",
                p.node
            ));
        }
        let mut dims = p.dims.clone();
        dims.sort_unstable();
        dims.dedup();
        if dims.len() != p.dims.len() {
            violations.push(format!("partial entry for node {} repeats a dim", p.node));
        }
        if dims.iter().filter(|&&j| j < d).count() >= d {
            violations.push(format!(
                "partial must retain >=1 dim (node {} covers all {d}; declare it in attrs_full)",
                p.node
            ));
        }
        if req.attrs_full.contains(p.node) {
            violations.push(format!(
                "node {} appears in both attrs_full and attrs_partial",
                p.node
            ));
        }
    }
    partial_nodes.sort_unstable();
    if partial_nodes.windows(2).any(|w| w[0] == w[1]) {
        violations.push("node listed twice in attrs_partial".into());
    }
    ValidationReport { violations }
}

/// Affected node sets of one request. `v*` are the sets whose losses enter
/// `L_add` (evaluated on `G ⊖ ΔG`), `v*t` the sets entering `L_sub`
/// (evaluated on `G`). All neighborhoods are taken on the topology of `G`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AffectedSets {
    pub k: usize,
    pub v1: NodeSet,
    pub v2: NodeSet,
    pub v3: NodeSet,
    pub v4: NodeSet,
    pub v1t: NodeSet,
    pub v2t: NodeSet,
    pub v3t: NodeSet,
    pub v4t: NodeSet,
    pub v_tilde: NodeSet,
    pub alphas: [bool; 4],
    /// Per category: whether the neighborhoods of two request entities
    /// overlap (treated as a single union).
    pub same_category_overlap: [bool; 4],
}

impl AffectedSets {
    pub fn add_sets(&self) -> [&NodeSet; 4] {
        [&self.v1, &self.v2, &self.v3, &self.v4]
    }

    pub fn sub_sets(&self) -> [&NodeSet; 4] {
        [&self.v1t, &self.v2t, &self.v3t, &self.v4t]
    }

    /// `∀ i≠j: V_i ∩ V_j = ∅ and Ṽ_i ∩ Ṽ_j = ∅`.
    pub fn pairwise_disjoint(&self) -> bool {
        let add = self.add_sets();
        let sub = self.sub_sets();
        for i in 0..4 {
            for j in (i + 1)..4 {
                if !add[i].is_disjoint(add[j]) || !sub[i].is_disjoint(sub[j]) {
                    return false;
                }
            }
        }
        true
    }

    /// Union of every set; any training node outside it keeps its loss.
    pub fn all_affected(&self) -> NodeSet {
        self.add_sets()
            .into_iter()
            .chain(self.sub_sets())
            .fold(NodeSet::new(), |acc, s| acc.union(s))
    }
}

fn neighborhoods_overlap(g: &AttributedGraph, sources: &NodeSet, k: usize) -> Result<bool> {
    let mut total = 0;
    let mut union = NodeSet::new();
    for v in sources.iter() {
        let mut nb = k_hop_neighbors(g, v, k)?;
        nb = nb.union(&NodeSet::from_sorted_unchecked(vec![v]));
        total += nb.len();
        union = union.union(&nb);
    }
    Ok(total > union.len())
}

pub fn compute_affected_sets(
    g: &AttributedGraph,
    req: &UnlearnRequest,
    k: usize,
) -> Result<AffectedSets> {
    if k < 1 {
        return Err(Error::Config("propagation depth k must be >= 1".into()));
    }
    let trn = g.train_nodes();
    let alphas = req.alphas();

    let v1 = k_hop_union(g, &req.nodes, k)?.intersection(&trn);
    let v1t = v1.union(&req.nodes);

    let full = req.attrs_full.clone();
    let v2 = full.union(&k_hop_union(g, &full, k)?.intersection(&trn));

    let partial = req.partial_owners();
    let v3 = partial.union(&k_hop_union(g, &partial, k)?.intersection(&trn));

    let ends = edge_endpoints(&req.edges);
    let v4 = k_hop_union(g, &ends, k)?.intersection(&trn);

    let owners = full.union(&partial);
    let v_tilde = v1
        .union(&v4)
        .union(&k_hop_union(g, &owners, k)?.intersection(&trn))
        .union(&owners.intersection(&trn));

    let same_category_overlap = [
        neighborhoods_overlap(g, &req.nodes, k)?,
        neighborhoods_overlap(g, &full, k)?,
        neighborhoods_overlap(g, &partial, k)?,
        neighborhoods_overlap(g, &ends, k)?,
    ];

    Ok(AffectedSets {
        k,
        v2t: v2.clone(),
        v3t: v3.clone(),
        v4t: v4.clone(),
        v1,
        v2,
        v3,
        v4,
        v1t,
        v_tilde,
        alphas,
        same_category_overlap,
    })
}

/// Ordered list of requests applied one after another.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RequestBatch {
    pub passes: Vec<UnlearnRequest>,
}

impl RequestBatch {
    pub fn len(&self) -> usize {
        self.passes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passes.is_empty()
    }
}

/// Returns `req` unchanged when its category sets are pairwise disjoint,
/// otherwise one single-category request per non-empty category in the
/// order nodes, full attributes, partial attributes, edges.
pub fn split_for_serializability(
    g: &AttributedGraph,
    req: &UnlearnRequest,
    k: usize,
) -> Result<RequestBatch> {
    if req.is_empty() {
        return Ok(RequestBatch {
            passes: vec![req.clone()],
        });
    }
    let sets = compute_affected_sets(g, req, k)?;
    if sets.pairwise_disjoint() {
        return Ok(RequestBatch {
            passes: vec![req.clone()],
        });
    }
    let alphas = req.alphas();
    let passes = Category::ORDER
        .iter()
        .zip(alphas)
        .filter(|(_, on)| *on)
        .map(|(&cat, _)| req.only(cat))
        .collect();
    Ok(RequestBatch { passes })
}

impl std::str::FromStr for Category {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nodes" => Ok(Category::Nodes),
            "edges" => Ok(Category::Edges),
            "attrs_full" => Ok(Category::AttrsFull),
            "attrs_partial" => Ok(Category::AttrsPartial),
            other => Err(Error::Config(format!(
                "unknown request type '{other}' (nodes, edges, attrs_full, attrs_partial)"
            ))),
        }
    }
}

/// Number of entities for an unlearn ratio, at least one.
pub fn ratio_count(ratio: f64, total: usize) -> usize {
    ((ratio * total as f64).round() as usize).clamp(1, total.max(1))
}

/// Seeded single-category request. Node and attribute requests draw
/// `ratio·|V_trn|` training nodes, edge requests `ratio·|E|` edges; partial
/// attribute requests zero `dims_ratio·d` dimensions per node (at least one,
/// at most `d − 1`). Draws are prefixes of one seeded permutation, so larger
/// ratios with the same seed contain smaller ones.
pub fn sample_request(
    g: &AttributedGraph,
    category: Category,
    ratio: f64,
    dims_ratio: f64,
    seed: u64,
) -> Result<UnlearnRequest> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Config("unlearn ratio must lie in (0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train: Vec<usize> = g.train_nodes().iter().collect();
    if category != Category::Edges && train.is_empty() {
        return Err(Error::EmptySet("training set"));
    }
    train.shuffle(&mut rng);
    let pick = |n: usize| train[..ratio_count(ratio, n)].iter().copied();
    Ok(match category {
        Category::Nodes => UnlearnRequest::nodes(pick(train.len())),
        Category::AttrsFull => UnlearnRequest {
            attrs_full: pick(train.len()).collect(),
            ..Default::default()
        },
        Category::AttrsPartial => {
            let d = g.feature_dim();
            if d < 2 {
                return Err(Error::Config(
                    "partial attribute requests need feature_dim >= 2".into(),
                ));
            }
            if !(dims_ratio > 0.0 && dims_ratio < 1.0) {
                return Err(Error::Config("dims ratio must lie in (0, 1)".into()));
            }
            let k = ((dims_ratio * d as f64).round() as usize).clamp(1, d - 1);
            let nodes: Vec<usize> = pick(train.len()).collect();
            let mut dims: Vec<usize> = (0..d).collect();
            let mut attrs_partial: Vec<PartialAttr> = nodes
                .into_iter()
                .map(|node| {
                    dims.shuffle(&mut rng);
                    let mut chosen = dims[..k].to_vec();
                    chosen.sort_unstable();
                    PartialAttr { node, dims: chosen }
                })
                .collect();
            attrs_partial.sort_by_key(|p| p.node);
            UnlearnRequest {
                attrs_partial,
                ..Default::default()
            }
        }
        Category::Edges => {
            let mut edges = g.edges();
            if edges.is_empty() {
                return Err(Error::EmptySet("edge set"));
            }
            edges.shuffle(&mut rng);
            let n = ratio_count(ratio, edges.len());
            edges.truncate(n);
            edges.sort_unstable();
            UnlearnRequest {
                edges,
                ..Default::default()
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{delete, GraphBuilder};
    use crate::linalg::Matrix;

    fn set(ids: &[usize]) -> NodeSet {
        ids.iter().copied().collect()
    }

    fn graph(n: usize, edges: &[Edge], train: &[usize]) -> AttributedGraph {
        let mut mask = vec![false; n];
        for &v in train {
            mask[v] = true;
        }
        let test = mask.iter().map(|b| !b).collect();
        GraphBuilder::new(Matrix::from_vec(n, 2, vec![1.0; 2 * n]), vec![0; n], 1)
            .masks(mask, test)
            .edges(edges.iter().copied())
            .build()
            .unwrap()
            .0
    }

    fn path4() -> AttributedGraph {
        graph(4, &[(0, 1), (1, 2), (2, 3)], &[0, 1, 2, 3])
    }

    #[test]
    fn empty_request_has_empty_sets() {
        let s = compute_affected_sets(&path4(), &UnlearnRequest::default(), 2).unwrap();
        assert_eq!(s.alphas, [false; 4]);
        assert!(s.all_affected().is_empty());
        assert!(s.v_tilde.is_empty());
    }

    #[test]
    fn node_request_on_path() {
        let s = compute_affected_sets(&path4(), &UnlearnRequest::nodes([1]), 1).unwrap();
        assert_eq!(s.v1, set(&[0, 2]));
        assert_eq!(s.v1t, set(&[0, 1, 2]));
        assert_eq!(s.alphas, [true, false, false, false]);
        assert!(s.v4.is_empty() && s.v2.is_empty() && s.v3.is_empty());
    }

    #[test]
    fn edge_request_on_path() {
        let s = compute_affected_sets(&path4(), &UnlearnRequest::edges([(1, 2)]), 1).unwrap();
        assert_eq!(s.v4, set(&[0, 1, 2, 3]));
        assert_eq!(s.v4, s.v4t);
    }

    #[test]
    fn attribute_sets_include_owners() {
        let g = graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4)], &[0, 1, 3]);
        let req = UnlearnRequest {
            attrs_full: set(&[2]),
            ..Default::default()
        };
        let s = compute_affected_sets(&g, &req, 1).unwrap();
        assert_eq!(s.v2, set(&[1, 2, 3]));
        assert_eq!(s.v2, s.v2t);
        // Owner 2 is a test node, so it does not enter the training-node part.
        assert_eq!(s.v_tilde, set(&[1, 3]));
    }

    #[test]
    fn zero_depth_is_a_config_error() {
        assert!(matches!(
            compute_affected_sets(&path4(), &UnlearnRequest::default(), 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn validate_catches_violations() {
        let g = path4();
        let req = UnlearnRequest {
            attrs_partial: vec![PartialAttr {
                node: 0,
                dims: vec![0, 1],
            }],
            ..Default::default()
        };
        let r = validate(&g, &req);
        assert_eq!(r.violations.len(), 1);
        assert!(r.violations[0].contains("partial must retain >=1 dim"));

        let r = validate(&g, &UnlearnRequest::edges([(0, 3)]));
        assert!(r.violations[0].starts_with("unknown edge"));

        let ok = UnlearnRequest {
            nodes: set(&[0]),
            edges: vec![(2, 3)],
            attrs_full: set(&[1]),
            attrs_partial: vec![PartialAttr {
                node: 2,
                dims: vec![1],
            }],
        };
        assert!(validate(&g, &ok).is_valid());

        let both = UnlearnRequest {
            attrs_full: set(&[2]),
            attrs_partial: vec![PartialAttr {
                node: 2,
                dims: vec![1],
            }],
            ..Default::default()
        };
        assert!(!validate(&g, &both).is_valid());
    }

    #[test]
    fn single_category_is_a_singleton_batch() {
        let b = split_for_serializability(&path4(), &UnlearnRequest::nodes([1]), 2).unwrap();
        assert_eq!(b.passes, vec![UnlearnRequest::nodes([1])]);
    }

    #[test]
    fn far_apart_categories_stay_together() {
        // Two components: 0-1-2 and 3-4-5.
        let g = graph(6, &[(0, 1), (1, 2), (3, 4), (4, 5)], &[0, 1, 2, 3, 4, 5]);
        let req = UnlearnRequest {
            nodes: set(&[0]),
            edges: vec![(4, 5)],
            ..Default::default()
        };
        let s = compute_affected_sets(&g, &req, 2).unwrap();
        assert!(s.v1.is_disjoint(&s.v4) && s.v1t.is_disjoint(&s.v4t));
        let b = split_for_serializability(&g, &req, 2).unwrap();
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn overlapping_categories_split_in_order() {
        let g = graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4)], &[0, 1, 2, 3, 4]);
        let req = UnlearnRequest {
            nodes: set(&[0]),
            edges: vec![(2, 3)],
            ..Default::default()
        };
        let s = compute_affected_sets(&g, &req, 1).unwrap();
        // V1 = {1}, V4 = {1,2,3,4}
        assert!(!s.v1.is_disjoint(&s.v4));
        let b = split_for_serializability(&g, &req, 1).unwrap();
        assert_eq!(
            b.passes,
            vec![UnlearnRequest::nodes([0]), UnlearnRequest::edges([(2, 3)])]
        );
        let mut h = g.clone();
        for p in &b.passes {
            h = delete(&h, p).unwrap().graph;
        }
        assert_eq!(h, delete(&g, &req).unwrap().graph);
    }

    #[test]
    fn request_json_round_trip() {
        let text = r#"{"nodes":[3,1,1],"edges":[[0,1]],"attrs_full":[2],
                      "attrs_partial":[{"node":4,"dims":[5,2]}]}"#;
        let r = UnlearnRequest::from_json(text).unwrap();
        assert_eq!(r.nodes, set(&[1, 3]));
        assert_eq!(r.attrs_partial[0].dims, vec![2, 5]);
        assert_eq!(UnlearnRequest::from_json(&r.to_json()).unwrap(), r);
        assert_eq!(UnlearnRequest::from_json("{}").unwrap(), UnlearnRequest::default());
    }
}
