#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use graph_unlearn::linalg::Matrix;
use graph_unlearn::request::{Category, PartialAttr};
use graph_unlearn::{AttributedGraph, GraphBuilder, NodeSet, UnlearnRequest};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random graph with class-shifted uniform features, ~70% training nodes
/// (nodes 0 and 1 always) and Bernoulli edges.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, d: usize, c: usize, p_edge: f64) -> AttributedGraph {
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
    let mut feats = Vec::with_capacity(n * d);
    for &l in &labels {
        for j in 0..d {
            let shift = if j % c == l { 1.0 } else { 0.0 };
            feats.push(shift + rng.gen_range(-1.0..1.0));
        }
    }
    let mut train: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
    train[0] = true;
    train[1] = true;
    let test: Vec<bool> = train.iter().map(|t| !t).collect();
    let mut b = GraphBuilder::new(Matrix::from_vec(n, d, feats), labels, c).masks(train, test);
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.gen_bool(p_edge) {
                b = b.edge(u, v);
            }
        }
    }
    b.build().expect("valid random graph").0
}

/// Graph from explicit parts; every node is a training node unless
/// `test` lists it.
pub fn graph_from(
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    c: usize,
    edges: &[(usize, usize)],
    test: &[usize],
) -> AttributedGraph {
    let n = labels.len();
    let d = features[0].len();
    let flat: Vec<f64> = features.into_iter().flatten().collect();
    let test_mask: Vec<bool> = (0..n).map(|v| test.contains(&v)).collect();
    let train_mask: Vec<bool> = test_mask.iter().map(|t| !t).collect();
    GraphBuilder::new(Matrix::from_vec(n, d, flat), labels, c)
        .masks(train_mask, test_mask)
        .edges(edges.iter().copied())
        .build()
        .expect("valid graph")
        .0
}

pub fn path_graph(n: usize, d: usize) -> AttributedGraph {
    let feats = (0..n).map(|v| (0..d).map(|j| ((v * d + j) as f64 * 0.37).sin()).collect()).collect();
    let labels = (0..n).map(|v| v % 2).collect();
    let edges: Vec<(usize, usize)> = (1..n).map(|v| (v - 1, v)).collect();
    graph_from(feats, labels, 2, &edges, &[])
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, pool: &[T], count: usize) -> Vec<T> {
    let mut v = pool.to_vec();
    v.shuffle(rng);
    v.truncate(count.min(pool.len()));
    v
}

/// Random request with 1–3 entities of each category in `kinds`.
pub fn random_request(rng: &mut ChaCha8Rng, g: &AttributedGraph, kinds: &[Category]) -> UnlearnRequest {
    let mut req = UnlearnRequest::default();
    let train: Vec<usize> = g.train_nodes().iter().collect();
    let all: Vec<usize> = (0..g.num_nodes()).collect();
    let mut used = NodeSet::new();
    for kind in kinds {
        let count = rng.gen_range(1..=3);
        match kind {
            Category::Nodes => {
                let keep = count.min(train.len().saturating_sub(2)).max(1);
                req.nodes = pick(rng, &train, keep).into_iter().collect();
            }
            Category::Edges => req.edges = pick(rng, &g.edges(), count),
            Category::AttrsFull => {
                req.attrs_full = pick(rng, &all, count).into_iter().collect();
                used = req.attrs_full.clone();
            }
            Category::AttrsPartial => {
                let free: Vec<usize> = all.iter().copied().filter(|&v| !used.contains(v)).collect();
                let d = g.feature_dim();
                let dims: Vec<usize> = (0..d).collect();
                let mut nodes = pick(rng, &free, count);
                nodes.sort_unstable();
                req.attrs_partial = nodes
                    .into_iter()
                    .map(|node| {
                        let k = rng.gen_range(1..d);
                        let mut ds = pick(rng, &dims, k);
                        ds.sort_unstable();
                        PartialAttr { node, dims: ds }
                    })
                    .collect();
            }
        }
    }
    req
}

pub const ALL: [Category; 4] = [
    Category::Nodes,
    Category::Edges,
    Category::AttrsFull,
    Category::AttrsPartial,
];

pub fn category_mix(i: usize) -> Vec<Category> {
    match i % 6 {
        0 => vec![Category::Nodes],
        1 => vec![Category::Edges],
        2 => vec![Category::AttrsFull],
        3 => vec![Category::AttrsPartial],
        4 => ALL.to_vec(),
        _ => vec![Category::Nodes, Category::Edges],
    }
}

pub fn rel(a: &[f64], b: &[f64]) -> f64 {
    graph_unlearn::linalg::distance(a, b) / graph_unlearn::linalg::norm(b).max(1e-300)
}
