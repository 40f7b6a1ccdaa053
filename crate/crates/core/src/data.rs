//! Dataset I/O, the Planetoid converter and the SBM generator.
//!
//! # Native format
//!
//! A dataset directory holds two tab-separated UTF-8 files, each with a
//! header row.
//!
//! `nodes.tsv`: `id  label  split  f0 .. f{d-1}`. Ids are `0..n` (any row
//! order, each exactly once), labels are `0..c`, `split` is `train`, `test`
//! or `none`.
//!
//! `edges.tsv`: `src  dst`. Rows are undirected; the loader symmetrizes,
//! collapses duplicates and rejects self-loops and unknown ids.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::certify::GaussianSampler;
use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, Edge, GraphBuilder};
use crate::linalg::Matrix;

pub const NODES_FILE: &str = "nodes.tsv";
pub const EDGES_FILE: &str = "edges.tsv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub num_nodes: usize,
    /// Data rows in `edges.tsv`.
    pub edge_rows: usize,
    /// Distinct undirected edges after symmetrization.
    pub num_edges: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub num_train: usize,
    pub num_test: usize,
}

impl DatasetStats {
    pub fn of(g: &AttributedGraph, edge_rows: usize) -> Self {
        Self {
            num_nodes: g.num_nodes(),
            edge_rows,
            num_edges: g.num_edges(),
            feature_dim: g.feature_dim(),
            num_classes: g.num_classes(),
            num_train: g.num_train(),
            num_test: g.test_nodes().len(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: AttributedGraph,
    pub stats: DatasetStats,
    pub warnings: Vec<String>,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, what: &str, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| parse_err(path, line, format!("invalid {what} '{s}'")))
}

struct NodeRow {
    label: usize,
    split: Split,
    features: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Split {
    Train,
    Test,
    None,
}

fn read_nodes(path: &Path) -> Result<Vec<NodeRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .map(|(_, l)| l)
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let cols: Vec<&str> = header.split('\t').collect();
    if cols.len() < 3 || cols[0] != "id" || cols[1] != "label" || cols[2] != "split" {
        return Err(parse_err(path, 1, "missing header 'id\\tlabel\\tsplit\\tf0..'"));
    }
    let d = cols.len() - 3;
    for (j, c) in cols[3..].iter().enumerate() {
        if *c != format!("f{j}") {
            return Err(parse_err(path, 1, format!("expected feature column 'f{j}', found '{c}'")));
        }
    }
    let mut rows: Vec<Option<NodeRow>> = Vec::new();
    let mut count = 0;
    for (i, line) in lines {
        let ln = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != d + 3 {
            return Err(parse_err(path, ln, format!("expected {} columns, found {}", d + 3, f.len())));
        }
        let id: usize = parse_field(path, ln, "node id", f[0])?;
        let label = parse_field(path, ln, "label", f[1])?;
        let split = match f[2] {
            "train" => Split::Train,
            "test" => Split::Test,
            "none" => Split::None,
            other => return Err(parse_err(path, ln, format!("invalid split '{other}'"))),
        };
        let features = f[3..]
            .iter()
            .map(|s| parse_field(path, ln, "feature", s))
            .collect::<Result<Vec<f64>>>()?;
        if id >= rows.len() {
            rows.resize_with(id + 1, || None);
        }
        if rows[id].is_some() {
            return Err(parse_err(path, ln, format!("duplicate node id {id}")));
        }
        rows[id] = Some(NodeRow {
            label,
            split,
            features,
        });
        count += 1;
    }
    if count != rows.len() {
        let missing = rows.iter().position(Option::is_none).unwrap_or(0);
        return Err(Error::InvalidGraph(format!(
            "node ids must be 0..{count}; id {missing} is missing"
        )));
    }
    Ok(rows.into_iter().map(|r| r.expect("checked")).collect())
}

fn read_edges(path: &Path) -> Result<Vec<Edge>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.split('\t').collect::<Vec<_>>() == ["src", "dst"] => {}
        _ => return Err(parse_err(path, 1, "missing header 'src\\tdst'")),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let ln = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 2 {
            return Err(parse_err(path, ln, format!("expected 2 columns, found {}", f.len())));
        }
        out.push((
            parse_field(path, ln, "source id", f[0])?,
            parse_field(path, ln, "target id", f[1])?,
        ));
    }
    Ok(out)
}

/// Loads `nodes.tsv` and `edges.tsv` from `dir`.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let rows = read_nodes(&dir.join(NODES_FILE))?;
    let edges = read_edges(&dir.join(EDGES_FILE))?;
    let n = rows.len();
    let d = rows.first().map_or(0, |r| r.features.len());
    let c = rows.iter().map(|r| r.label + 1).max().unwrap_or(0);
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    let mut train = Vec::with_capacity(n);
    let mut test = Vec::with_capacity(n);
    for r in &rows {
        features.extend_from_slice(&r.features);
        labels.push(r.label);
        train.push(r.split == Split::Train);
        test.push(r.split == Split::Test);
    }
    let edge_rows = edges.len();
    let (graph, warnings) = GraphBuilder::new(Matrix::from_vec(n, d, features), labels, c)
        .masks(train, test)
        .edges(edges)
        .build()?;
    Ok(Dataset {
        stats: DatasetStats::of(&graph, edge_rows),
        graph,
        warnings,
    })
}

/// Writes `g` in the native format. Floats use the shortest representation
/// that parses back to the same value.
pub fn save_dataset(g: &AttributedGraph, dir: &Path) -> Result<()> {
    write_dataset(g, &g.edges(), dir)
}

fn write_dataset(g: &AttributedGraph, edges: &[Edge], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut s = String::from("id\tlabel\tsplit");
    for j in 0..g.feature_dim() {
        write!(s, "\tf{j}").expect("write to string");
    }
    s.push('\n');
    for v in 0..g.num_nodes() {
        let split = if g.train_mask()[v] {
            "train"
        } else if g.test_mask()[v] {
            "test"
        } else {
            "none"
        };
        write!(s, "{v}\t{}\t{split}", g.labels()[v]).expect("write to string");
        for x in g.features().row(v) {
            write!(s, "\t{x}").expect("write to string");
        }
        s.push('\n');
    }
    std::fs::write(dir.join(NODES_FILE), s)?;
    let mut e = String::from("src\tdst\n");
    for (u, v) in edges {
        writeln!(e, "{u}\t{v}").expect("write to string");
    }
    std::fs::write(dir.join(EDGES_FILE), e)?;
    Ok(())
}

/// Stochastic-block-model graph with class-dependent Gaussian features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub feature_dim: usize,
    /// Scale of the class-mean one-hot embedding.
    pub separation: f64,
    /// Standard deviation of the per-coordinate feature noise.
    pub noise: f64,
    pub train_fraction: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_nodes: 300,
            num_classes: 4,
            p_intra: 0.1,
            p_inter: 0.01,
            feature_dim: 32,
            separation: 1.0,
            noise: 1.0,
            train_fraction: 0.9,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_nodes == 0 || self.num_classes == 0 || self.feature_dim == 0 {
            return Err(Error::Config(
                "synthetic graph needs nodes, classes and features".into(),
            ));
        }
        for (name, p) in [("p_intra", self.p_intra), ("p_inter", self.p_inter)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::Config("train_fraction must lie in (0, 1]".into()));
        }
        if !(self.noise >= 0.0 && self.separation.is_finite() && self.noise.is_finite()) {
            return Err(Error::Config("separation and noise must be finite, noise >= 0".into()));
        }
        Ok(())
    }
}

/// Samples a graph from `spec`. Node `v` has class `v mod c`; its features
/// are `separation·e_{class mod d}` plus `N(0, noise²)` noise; a random
/// `train_fraction` of nodes trains, the rest tests.
pub fn gen_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<AttributedGraph> {
    spec.validate()?;
    let (n, c, d) = (spec.num_nodes, spec.num_classes, spec.feature_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|v| v % c).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] {
                spec.p_intra
            } else {
                spec.p_inter
            };
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let mut normal = GaussianSampler::new(rng.gen());
    let mut features = Matrix::zeros(n, d);
    for v in 0..n {
        let row = features.row_mut(v);
        for x in row.iter_mut() {
            *x = spec.noise * normal.standard_normal();
        }
        row[labels[v] % d] += spec.separation;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = ((spec.train_fraction * n as f64).round() as usize).clamp(1, n);
    let mut train = vec![false; n];
    for &v in &order[..n_train] {
        train[v] = true;
    }
    let test = train.iter().map(|t| !t).collect();
    Ok(GraphBuilder::new(features, labels, c)
        .masks(train, test)
        .edges(edges)
        .build()?
        .0)
}

/// Provenance of a converted dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvertManifest {
    pub content_file: PathBuf,
    pub cites_file: PathBuf,
    pub classes: Vec<String>,
    /// Original paper id of each node, indexed by native id.
    pub original_ids: Vec<String>,
    pub train_fraction: f64,
    pub stratified: bool,
    pub split_seed: u64,
    pub self_loops_dropped: usize,
    pub dangling_edges_dropped: usize,
    pub stats: DatasetStats,
}

/// Converts Planetoid-style `.content` (`id  f0 .. f{d-1}  class`) and
/// `.cites` (`cited  citing`) files into the native format, with a seeded
/// split stratified by class. Edge rows are kept as listed apart from
/// self-loops and rows naming unknown papers.
pub fn convert_planetoid(
    content: &Path,
    cites: &Path,
    out_dir: &Path,
    train_fraction: f64,
    seed: u64,
) -> Result<ConvertManifest> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
    }
    let text = std::fs::read_to_string(content)?;
    let mut ids = Vec::new();
    let mut index = HashMap::new();
    let mut features = Vec::new();
    let mut class_names = Vec::new();
    let mut d = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() < 3 {
            return Err(parse_err(content, i + 1, "expected id, features and class"));
        }
        let dim = f.len() - 2;
        if *d.get_or_insert(dim) != dim {
            return Err(parse_err(content, i + 1, "inconsistent feature count"));
        }
        if index.insert(f[0].to_string(), ids.len()).is_some() {
            return Err(parse_err(content, i + 1, format!("duplicate paper id '{}'", f[0])));
        }
        ids.push(f[0].to_string());
        for s in &f[1..=dim] {
            features.push(parse_field::<f64>(content, i + 1, "feature", s)?);
        }
        class_names.push(f[dim + 1].to_string());
    }
    let n = ids.len();
    let d = d.unwrap_or(0);
    let mut classes: Vec<String> = class_names.clone();
    classes.sort();
    classes.dedup();
    let class_index: BTreeMap<&str, usize> =
        classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let labels: Vec<usize> = class_names.iter().map(|c| class_index[c.as_str()]).collect();

    let text = std::fs::read_to_string(cites)?;
    let mut edges = Vec::new();
    let (mut self_loops, mut dangling) = (0, 0);
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 2 {
            return Err(parse_err(cites, i + 1, "expected two paper ids"));
        }
        match (index.get(f[0]), index.get(f[1])) {
            (Some(&u), Some(&v)) if u == v => self_loops += 1,
            (Some(&u), Some(&v)) => edges.push((u, v)),
            _ => dangling += 1,
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = vec![false; n];
    for class in 0..classes.len() {
        let mut members: Vec<usize> = (0..n).filter(|&v| labels[v] == class).collect();
        members.shuffle(&mut rng);
        let k = (train_fraction * members.len() as f64).round() as usize;
        for &v in &members[..k] {
            train[v] = true;
        }
    }
    let test = train.iter().map(|t| !t).collect();
    let (graph, _) = GraphBuilder::new(Matrix::from_vec(n, d, features), labels, classes.len())
        .masks(train, test)
        .edges(edges.iter().copied())
        .build()?;
    write_dataset(&graph, &edges, out_dir)?;
    let manifest = ConvertManifest {
        content_file: content.to_path_buf(),
        cites_file: cites.to_path_buf(),
        classes,
        original_ids: ids,
        train_fraction,
        stratified: true,
        split_seed: seed,
        self_loops_dropped: self_loops,
        dangling_edges_dropped: dangling,
        stats: DatasetStats::of(&graph, edges.len()),
    };
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}
