//! Trainable graph models: SGC (linear, strongly convex with the L2 term)
//! and a two-layer ReLU GCN.
//!
//! Parameter layout. SGC: `W` (`d × c`, row-major), `θ[i·c + a] = W[i][a]`.
//! GCN2: `W1` (`d × h`) followed by `W2` (`h × c`), both row-major; the first
//! layer consumes `Ŝ^{k-1} X`, the second aggregates once more with `Ŝ`.

pub mod checkpoint;
pub mod forward;
pub mod propagation;
pub mod trainer;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::linalg::{all_finite, axpy, dot, Matrix};

pub use forward::Forward;
pub use propagation::{propagate, PropagationOperator};
pub use trainer::{minimize, Differentiable, TrainDiagnostics, TrainerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Sgc,
    Gcn2,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgc" => Ok(ModelKind::Sgc),
            "gcn2" | "gcn" => Ok(ModelKind::Gcn2),
            other => Err(Error::Config(format!("unknown model kind '{other}'"))),
        }
    }
}

/// Architecture and objective hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub k: usize,
    pub reg_lambda: f64,
    /// Hidden width of the nonlinear model; ignored for SGC.
    pub hidden: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: ModelKind::Sgc,
            k: 2,
            reg_lambda: 0.05,
            hidden: 16,
        }
    }
}

impl ModelSpec {
    pub fn sgc(k: usize, reg_lambda: f64) -> Self {
        Self {
            kind: ModelKind::Sgc,
            k,
            reg_lambda,
            ..Default::default()
        }
    }

    pub fn gcn2(k: usize, reg_lambda: f64, hidden: usize) -> Self {
        Self {
            kind: ModelKind::Gcn2,
            k,
            reg_lambda,
            hidden,
        }
    }

    pub fn num_params(&self, feature_dim: usize, num_classes: usize) -> usize {
        match self.kind {
            ModelKind::Sgc => feature_dim * num_classes,
            ModelKind::Gcn2 => feature_dim * self.hidden + self.hidden * num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("propagation depth k must be >= 1".into()));
        }
        if !(self.reg_lambda.is_finite() && self.reg_lambda >= 0.0) {
            return Err(Error::Config("reg_lambda must be finite and >= 0".into()));
        }
        match self.kind {
            ModelKind::Sgc if self.reg_lambda <= 0.0 => Err(Error::Config(
                "SGC requires reg_lambda > 0 for strong convexity".into(),
            )),
            ModelKind::Gcn2 if self.k < 2 => {
                Err(Error::Config("the two-layer GCN needs k >= 2".into()))
            }
            ModelKind::Gcn2 if self.hidden == 0 => {
                Err(Error::Config("hidden width must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// A parameter vector together with the spec it was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub theta: Vec<f64>,
    pub seed: u64,
    pub diagnostics: TrainDiagnostics,
}

impl TrainedModel {
    pub fn with_theta(&self, theta: Vec<f64>) -> Self {
        Self {
            theta,
            ..self.clone()
        }
    }

    pub fn check_invariants(&self) -> Result<()> {
        self.spec.validate()?;
        let p = self.spec.num_params(self.feature_dim, self.num_classes);
        if self.theta.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: self.theta.len(),
            });
        }
        if !all_finite(&self.theta) {
            return Err(Error::InvalidGraph("parameter vector is not finite".into()));
        }
        Ok(())
    }

    pub fn check_graph(&self, g: &AttributedGraph) -> Result<()> {
        if g.feature_dim() != self.feature_dim || g.num_classes() != self.num_classes {
            return Err(Error::Config(format!(
                "model expects d={}, c={} but graph has d={}, c={}",
                self.feature_dim,
                self.num_classes,
                g.feature_dim(),
                g.num_classes()
            )));
        }
        Ok(())
    }

    pub fn objective<'g>(&self, g: &'g AttributedGraph) -> Result<Objective<'g>> {
        self.check_graph(g)?;
        Objective::new(&self.spec, g)
    }
}

/// Cross-entropy of node `v` under `model` on `g`, regularizer excluded.
pub fn loss_per_node(model: &TrainedModel, g: &AttributedGraph, v: usize) -> Result<f64> {
    model.check_graph(g)?;
    Forward::new(&model.spec, g)?.node_loss(&model.theta, v)
}

/// Mean training cross-entropy plus `(λ/2)‖θ‖²`.
pub struct Objective<'g> {
    forward: Forward<'g>,
    weights: Vec<(usize, f64)>,
    m: usize,
    reg_lambda: f64,
}

impl<'g> Objective<'g> {
    /// Objective over the graph's current training mask.
    pub fn new(spec: &ModelSpec, g: &'g AttributedGraph) -> Result<Self> {
        let nodes: Vec<usize> = g.train_nodes().iter().collect();
        Self::over_nodes(spec, g, &nodes)
    }

    pub fn over_nodes(spec: &ModelSpec, g: &'g AttributedGraph, nodes: &[usize]) -> Result<Self> {
        let forward = Forward::new(spec, g)?;
        let m = nodes.len();
        let w = if m == 0 { 0.0 } else { 1.0 / m as f64 };
        Ok(Self {
            forward,
            weights: nodes.iter().map(|&v| (v, w)).collect(),
            m,
            reg_lambda: spec.reg_lambda,
        })
    }

    pub fn forward(&self) -> &Forward<'g> {
        &self.forward
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn reg_lambda(&self) -> f64 {
        self.reg_lambda
    }

    pub fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.value_and_gradient(theta)?.1)
    }

    /// Hessian-vector product `∇²L(θ)·v`, exact for both model families
    /// (the ReLU mask is held fixed).
    pub fn hvp(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let mut out = match self.forward.spec().kind {
            ModelKind::Sgc => self.forward.sgc_weighted_hvp(theta, &self.weights, v)?,
            ModelKind::Gcn2 => self.forward.gcn2_weighted_hvp(theta, &self.weights, v)?,
        };
        axpy(self.reg_lambda, v, &mut out);
        Ok(out)
    }

    /// Explicit `p × p` Hessian.
    pub fn hessian(&self, theta: &[f64]) -> Result<Matrix> {
        let p = theta.len();
        let mut h = match self.forward.spec().kind {
            ModelKind::Sgc => self.forward.sgc_weighted_hessian(theta, &self.weights)?,
            ModelKind::Gcn2 => {
                let mut h = Matrix::zeros(p, p);
                let mut e = vec![0.0; p];
                for j in 0..p {
                    e[j] = 1.0;
                    let col = self.hvp(theta, &e)?;
                    e[j] = 0.0;
                    for i in 0..p {
                        h[(i, j)] = col[i];
                    }
                }
                for i in 0..p {
                    for j in (i + 1)..p {
                        let s = 0.5 * (h[(i, j)] + h[(j, i)]);
                        h[(i, j)] = s;
                        h[(j, i)] = s;
                    }
                }
                return Ok(h);
            }
        };
        for i in 0..p {
            h[(i, i)] += self.reg_lambda;
        }
        Ok(h)
    }

    /// Training nodes the objective averages over.
    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.weights.iter().map(|&(v, _)| v)
    }
}

impl Differentiable for Objective<'_> {
    fn dim(&self) -> usize {
        self.forward.num_params()
    }

    fn value(&self, theta: &[f64]) -> Result<f64> {
        let (ce, _) = self.forward.weighted_loss(theta, &self.weights, false)?;
        Ok(ce + 0.5 * self.reg_lambda * dot(theta, theta))
    }

    fn value_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (ce, g) = self.forward.weighted_loss(theta, &self.weights, true)?;
        let mut g = g.expect("gradient requested");
        axpy(self.reg_lambda, theta, &mut g);
        Ok((ce + 0.5 * self.reg_lambda * dot(theta, theta), g))
    }
}

/// Initial parameters: zeros for SGC, seeded Glorot-uniform for GCN2.
pub fn initial_theta(spec: &ModelSpec, feature_dim: usize, num_classes: usize, seed: u64) -> Vec<f64> {
    match spec.kind {
        ModelKind::Sgc => vec![0.0; spec.num_params(feature_dim, num_classes)],
        ModelKind::Gcn2 => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = spec.hidden;
            let a1 = (6.0 / (feature_dim + h) as f64).sqrt();
            let a2 = (6.0 / (h + num_classes) as f64).sqrt();
            let mut out = Vec::with_capacity(spec.num_params(feature_dim, num_classes));
            out.extend((0..feature_dim * h).map(|_| rng.gen_range(-a1..a1)));
            out.extend((0..h * num_classes).map(|_| rng.gen_range(-a2..a2)));
            out
        }
    }
}

/// Trains `spec` on `g`'s training nodes, from `init` or the default start.
pub fn train(
    spec: &ModelSpec,
    g: &AttributedGraph,
    init: Option<Vec<f64>>,
    seed: u64,
    cfg: TrainerConfig,
) -> Result<TrainedModel> {
    let obj = Objective::new(spec, g)?;
    let init = init
        .unwrap_or_else(|| initial_theta(spec, g.feature_dim(), g.num_classes(), seed));
    let (theta, diagnostics) = minimize(&obj, init, cfg)?;
    Ok(TrainedModel {
        spec: spec.clone(),
        feature_dim: g.feature_dim(),
        num_classes: g.num_classes(),
        theta,
        seed,
        diagnostics,
    })
}

/// Class predictions `argmax` of the logits for every node.
pub fn predict(model: &TrainedModel, g: &AttributedGraph) -> Result<Vec<usize>> {
    model.check_graph(g)?;
    let logits = Forward::new(&model.spec, g)?.all_logits(&model.theta)?;
    Ok((0..g.num_nodes())
        .map(|v| {
            let row = logits.row(v);
            let mut best = 0;
            for (j, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}
