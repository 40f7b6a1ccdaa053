//! Utility, effectiveness and timing metrics.

use std::collections::{BTreeMap, HashSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{attribute_owners, canonical_edge, delete, AttributedGraph, Edge, NodeSet};
use crate::linalg::{dot, norm, softmax_into};
use crate::model::{predict, Forward, TrainedModel};
use crate::request::UnlearnRequest;

/// Micro-averaged F1 over the test nodes. For single-label multiclass
/// prediction every miss is one false positive and one false negative, so
/// this equals accuracy.
pub fn f1_micro(model: &TrainedModel, g: &AttributedGraph) -> Result<f64> {
    let test = g.test_nodes();
    if test.is_empty() {
        return Err(Error::EmptySet("test set"));
    }
    let pred = predict(model, g)?;
    let correct = test.iter().filter(|&v| pred[v] == g.labels()[v]).count();
    Ok(correct as f64 / test.len() as f64)
}

/// ROC-AUC of `positives` against `negatives` (Mann–Whitney U with tied
/// scores sharing their average rank).
pub fn auc(positives: &[f64], negatives: &[f64]) -> Result<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::EmptySet("AUC score set"));
    }
    if positives.iter().chain(negatives).any(|s| s.is_nan()) {
        return Err(Error::Config("AUC scores must not be NaN".into()));
    }
    let mut all: Vec<(f64, bool)> = positives
        .iter()
        .map(|&s| (s, true))
        .chain(negatives.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * all[i..=j].iter().filter(|x| x.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (positives.len() as f64, negatives.len() as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Membership score of each node: negative cross-entropy on `g`.
pub fn membership_scores(model: &TrainedModel, g: &AttributedGraph, nodes: &NodeSet) -> Result<Vec<f64>> {
    model.check_graph(g)?;
    let fwd = Forward::new(&model.spec, g)?;
    nodes.iter().map(|v| fwd.node_loss(&model.theta, v).map(|l| -l)).collect()
}

/// Membership-inference proxy for nodes: AUC of the unlearned nodes'
/// scores against held-out never-trained nodes, scored on the original
/// graph.
pub fn mi_proxy_auc(
    model: &TrainedModel,
    g_original: &AttributedGraph,
    unlearned: &NodeSet,
    holdout: &NodeSet,
) -> Result<f64> {
    if unlearned.len() != holdout.len() {
        return Err(Error::InvalidRequest(format!(
            "unbalanced MI sets: {} unlearned vs {} holdout",
            unlearned.len(),
            holdout.len()
        )));
    }
    let pos = membership_scores(model, g_original, unlearned)?;
    let neg = membership_scores(model, g_original, holdout)?;
    auc(&pos, &neg)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d = norm(a) * norm(b);
    if d == 0.0 {
        0.0
    } else {
        dot(a, b) / d
    }
}

/// Cosine similarity of the endpoints' softmax outputs.
pub fn edge_scores(model: &TrainedModel, g: &AttributedGraph, edges: &[Edge]) -> Result<Vec<f64>> {
    model.check_graph(g)?;
    let logits = Forward::new(&model.spec, g)?.all_logits(&model.theta)?;
    let c = g.num_classes();
    let mut pu = vec![0.0; c];
    let mut pv = vec![0.0; c];
    edges
        .iter()
        .map(|&(u, v)| {
            g.check_node(u)?;
            g.check_node(v)?;
            softmax_into(logits.row(u), &mut pu);
            softmax_into(logits.row(v), &mut pv);
            Ok(cosine(&pu, &pv))
        })
        .collect()
}

/// Membership-inference proxy for edges: AUC of unlearned edges against
/// node pairs that are not edges of the original graph.
pub fn mi_proxy_auc_edges(
    model: &TrainedModel,
    g_original: &AttributedGraph,
    unlearned_edges: &[Edge],
    negative_edges: &[Edge],
) -> Result<f64> {
    if unlearned_edges.len() != negative_edges.len() {
        return Err(Error::InvalidRequest(format!(
            "unbalanced MI edge sets: {} vs {}",
            unlearned_edges.len(),
            negative_edges.len()
        )));
    }
    if let Some(&(u, v)) = negative_edges.iter().find(|&&(u, v)| g_original.has_edge(u, v)) {
        return Err(Error::InvalidRequest(format!(
            "negative edge ({u}, {v}) exists in the graph"
        )));
    }
    let pos = edge_scores(model, g_original, unlearned_edges)?;
    let neg = edge_scores(model, g_original, negative_edges)?;
    auc(&pos, &neg)
}

/// Uniformly samples `count` distinct non-edges (no self-loops) by rejection.
pub fn sample_negative_edges(g: &AttributedGraph, count: usize, seed: u64) -> Result<Vec<Edge>> {
    let n = g.num_nodes();
    let capacity = n * n.saturating_sub(1) / 2 - g.num_edges();
    if count > capacity {
        return Err(Error::InvalidRequest(format!(
            "cannot sample {count} non-edges; only {capacity} exist"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u == v || g.has_edge(u, v) {
            continue;
        }
        let e = canonical_edge((u, v));
        if seen.insert(e) {
            out.push(e);
        }
    }
    Ok(out)
}

/// Seeded sample of `count` members of `pool` without replacement: the
/// first `count` entries of one seeded permutation, so samples of growing
/// size from the same seed are nested.
pub fn sample_nodes(pool: &NodeSet, count: usize, seed: u64) -> Result<NodeSet> {
    if count > pool.len() {
        return Err(Error::InvalidRequest(format!(
            "cannot sample {count} nodes from a pool of {}",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = pool.as_slice().to_vec();
    order.shuffle(&mut rng);
    Ok(order.into_iter().take(count).collect())
}

/// Mean cross-entropy over the nodes whose attributes the request zeroes,
/// evaluated on the graph with those entries zeroed.
pub fn attr_unlearn_loss(model: &TrainedModel, g: &AttributedGraph, req: &UnlearnRequest) -> Result<f64> {
    let attrs = UnlearnRequest {
        attrs_full: req.attrs_full.clone(),
        attrs_partial: req.attrs_partial.clone(),
        ..Default::default()
    };
    let entries = attrs.attribute_entries(g.feature_dim());
    if entries.is_empty() {
        return Err(Error::InvalidRequest(
            "attribute loss needs at least one attribute entry".into(),
        ));
    }
    let owners = attribute_owners(g, &entries)?;
    let zeroed = delete(g, &attrs)?.graph;
    model.check_graph(&zeroed)?;
    let fwd = Forward::new(&model.spec, &zeroed)?;
    let mut total = 0.0;
    for v in owners.iter() {
        total += fwd.node_loss(&model.theta, v)?;
    }
    Ok(total / owners.len() as f64)
}

/// Runs `f` and returns its result with the elapsed monotonic wall time.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

/// Summary of repeated timings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub median: f64,
    pub mean: f64,
    pub variance: f64,
    pub repeats: usize,
}

impl TimingStats {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySet("timing samples"));
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            0.5 * (s[n / 2 - 1] + s[n / 2])
        };
        let mean = s.iter().sum::<f64>() / n as f64;
        let variance = s.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        Ok(Self {
            median,
            mean,
            variance,
            repeats: n,
        })
    }
}

/// Times `f` `repeats` times; the result of the last run is returned.
pub fn timed_repeat<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<(T, TimingStats)> {
    let mut samples = Vec::with_capacity(repeats);
    let mut last = None;
    for _ in 0..repeats.max(1) {
        let (out, secs) = timed(&mut f);
        last = Some(out?);
        samples.push(secs);
    }
    Ok((last.expect("at least one run"), TimingStats::from_samples(&samples)?))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub f1_micro: Option<f64>,
    pub mi_auc: Option<f64>,
    pub mi_auc_edges: Option<f64>,
    pub attr_unlearn_loss: Option<f64>,
    pub unlearn_ratio: Option<f64>,
    pub request_type: Option<String>,
    pub seeds: BTreeMap<String, u64>,
    pub wall_times: BTreeMap<String, f64>,
}
