//! Per-node cross-entropy, gradients and Hessian-vector products for the
//! two model families over one fixed graph.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::linalg::{cross_entropy, softmax_into, Matrix};
use crate::model::propagation::PropagationOperator;
use crate::model::{ModelKind, ModelSpec};

enum Propagated {
    /// `Z = Ŝᵏ X`.
    Sgc { z: Matrix },
    /// First layer input `P = Ŝ^{k-1} X` plus the operator for the second layer.
    Gcn2 {
        p: Matrix,
        op: PropagationOperator,
        hidden: usize,
    },
}

/// Precomputed propagation for a model spec on a graph.
pub struct Forward<'g> {
    graph: &'g AttributedGraph,
    spec: ModelSpec,
    prop: Propagated,
}

/// Hidden activations of the nonlinear model for one parameter vector.
struct HiddenState {
    /// `P W1` before the ReLU.
    pre: Matrix,
    /// `relu(P W1)`.
    act: Matrix,
}

impl<'g> Forward<'g> {
    pub fn new(spec: &ModelSpec, graph: &'g AttributedGraph) -> Result<Self> {
        spec.validate()?;
        let op = PropagationOperator::new(graph);
        let prop = match spec.kind {
            ModelKind::Sgc => Propagated::Sgc {
                z: op.apply_times(graph.features(), spec.k),
            },
            ModelKind::Gcn2 => Propagated::Gcn2 {
                p: op.apply_times(graph.features(), spec.k - 1),
                op,
                hidden: spec.hidden,
            },
        };
        Ok(Self {
            graph,
            spec: spec.clone(),
            prop,
        })
    }

    pub fn graph(&self) -> &'g AttributedGraph {
        self.graph
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn num_params(&self) -> usize {
        self.spec
            .num_params(self.graph.feature_dim(), self.graph.num_classes())
    }

    fn classes(&self) -> usize {
        self.graph.num_classes()
    }

    /// Propagated SGC features; `None` for the nonlinear model.
    pub fn sgc_features(&self) -> Option<&Matrix> {
        match &self.prop {
            Propagated::Sgc { z } => Some(z),
            Propagated::Gcn2 { .. } => None,
        }
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        let p = self.num_params();
        if theta.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: theta.len(),
            });
        }
        Ok(())
    }

    fn check_labeled(&self, v: usize) -> Result<()> {
        self.graph.check_node(v)?;
        if self.graph.is_removed(v) {
            return Err(Error::Unlabeled(v));
        }
        Ok(())
    }

    fn hidden_state(&self, theta: &[f64]) -> Option<HiddenState> {
        let Propagated::Gcn2 { p, hidden, .. } = &self.prop else {
            return None;
        };
        let (d, h) = (p.cols(), *hidden);
        let w1 = &theta[..d * h];
        let n = p.rows();
        let mut pre = Matrix::zeros(n, h);
        for v in 0..n {
            let out = pre.row_mut(v);
            for (i, &x) in p.row(v).iter().enumerate() {
                if x != 0.0 {
                    for (o, w) in out.iter_mut().zip(&w1[i * h..(i + 1) * h]) {
                        *o += x * w;
                    }
                }
            }
        }
        let mut act = pre.clone();
        for a in act.as_mut_slice() {
            *a = a.max(0.0);
        }
        Some(HiddenState { pre, act })
    }

    fn logits_with(&self, theta: &[f64], v: usize, state: Option<&HiddenState>) -> Vec<f64> {
        let c = self.classes();
        let mut logits = vec![0.0; c];
        match &self.prop {
            Propagated::Sgc { z } => {
                for (i, &x) in z.row(v).iter().enumerate() {
                    if x != 0.0 {
                        for (l, w) in logits.iter_mut().zip(&theta[i * c..(i + 1) * c]) {
                            *l += x * w;
                        }
                    }
                }
            }
            Propagated::Gcn2 { p, op, hidden } => {
                let h = *hidden;
                let w2 = &theta[p.cols() * h..];
                let state = state.expect("hidden state");
                let mut agg = vec![0.0; h];
                for (u, s) in op.row(v) {
                    for (a, x) in agg.iter_mut().zip(state.act.row(u)) {
                        *a += s * x;
                    }
                }
                for (j, &a) in agg.iter().enumerate() {
                    for (l, w) in logits.iter_mut().zip(&w2[j * c..(j + 1) * c]) {
                        *l += a * w;
                    }
                }
            }
        }
        logits
    }

    /// Output logits of every node.
    pub fn all_logits(&self, theta: &[f64]) -> Result<Matrix> {
        self.check_theta(theta)?;
        let state = self.hidden_state(theta);
        let n = self.graph.num_nodes();
        let c = self.classes();
        let mut out = Matrix::zeros(n, c);
        for v in 0..n {
            out.row_mut(v)
                .copy_from_slice(&self.logits_with(theta, v, state.as_ref()));
        }
        Ok(out)
    }

    /// Cross-entropy of node `v` (regularizer excluded).
    pub fn node_loss(&self, theta: &[f64], v: usize) -> Result<f64> {
        self.check_theta(theta)?;
        self.check_labeled(v)?;
        let state = self.hidden_state(theta);
        Ok(cross_entropy(
            &self.logits_with(theta, v, state.as_ref()),
            self.graph.labels()[v],
        ))
    }

    /// Weighted sum `Σ w_v · CE(v)` and, optionally, its gradient.
    pub fn weighted_loss(
        &self,
        theta: &[f64],
        nodes: &[(usize, f64)],
        with_grad: bool,
    ) -> Result<(f64, Option<Vec<f64>>)> {
        self.check_theta(theta)?;
        for &(v, _) in nodes {
            self.check_labeled(v)?;
        }
        let state = self.hidden_state(theta);
        let mut grad = with_grad.then(|| vec![0.0; theta.len()]);
        let mut total = 0.0;
        let c = self.classes();
        let mut probs = vec![0.0; c];
        for &(v, weight) in nodes {
            let logits = self.logits_with(theta, v, state.as_ref());
            let y = self.graph.labels()[v];
            total += weight * cross_entropy(&logits, y);
            if let Some(g) = grad.as_mut() {
                softmax_into(&logits, &mut probs);
                probs[y] -= 1.0;
                self.accumulate_node_grad(theta, v, &probs, weight, state.as_ref(), g);
                if !crate::linalg::all_finite(g) {
                    return Err(Error::NonFiniteGradient(v));
                }
            }
        }
        Ok((total, grad))
    }

    /// Gradient of the cross-entropy of a single node.
    pub fn node_grad(&self, theta: &[f64], v: usize) -> Result<Vec<f64>> {
        let (_, g) = self.weighted_loss(theta, &[(v, 1.0)], true)?;
        Ok(g.expect("gradient requested"))
    }

    /// `out += weight · ∂CE(v)/∂θ`, with `err = softmax − onehot`.
    fn accumulate_node_grad(
        &self,
        theta: &[f64],
        v: usize,
        err: &[f64],
        weight: f64,
        state: Option<&HiddenState>,
        out: &mut [f64],
    ) {
        let c = self.classes();
        match &self.prop {
            Propagated::Sgc { z } => {
                for (i, &x) in z.row(v).iter().enumerate() {
                    if x != 0.0 {
                        let s = weight * x;
                        for (o, e) in out[i * c..(i + 1) * c].iter_mut().zip(err) {
                            *o += s * e;
                        }
                    }
                }
            }
            Propagated::Gcn2 { p, op, hidden } => {
                let h = *hidden;
                let d = p.cols();
                let state = state.expect("hidden state");
                let w2 = &theta[d * h..];
                let mut agg = vec![0.0; h];
                for (u, s) in op.row(v) {
                    for (a, x) in agg.iter_mut().zip(state.act.row(u)) {
                        *a += s * x;
                    }
                }
                let (g1, g2) = out.split_at_mut(d * h);
                for (j, &a) in agg.iter().enumerate() {
                    for (o, e) in g2[j * c..(j + 1) * c].iter_mut().zip(err) {
                        *o += weight * a * e;
                    }
                }
                // dCE/d agg = W2 · err
                let dagg: Vec<f64> = (0..h)
                    .map(|j| {
                        w2[j * c..(j + 1) * c]
                            .iter()
                            .zip(err)
                            .map(|(w, e)| w * e)
                            .sum()
                    })
                    .collect();
                for (u, s) in op.row(v) {
                    let pre = state.pre.row(u);
                    let dpre: Vec<f64> = (0..h)
                        .map(|j| if pre[j] > 0.0 { weight * s * dagg[j] } else { 0.0 })
                        .collect();
                    if dpre.iter().all(|&x| x == 0.0) {
                        continue;
                    }
                    for (i, &x) in p.row(u).iter().enumerate() {
                        if x != 0.0 {
                            for (o, dp) in g1[i * h..(i + 1) * h].iter_mut().zip(&dpre) {
                                *o += x * dp;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Exact `Σ w_v ∇²CE(v) · vec` for the SGC model.
    pub fn sgc_weighted_hvp(
        &self,
        theta: &[f64],
        nodes: &[(usize, f64)],
        vec: &[f64],
    ) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        self.check_theta(vec)?;
        let Propagated::Sgc { z } = &self.prop else {
            return Err(Error::Config("analytic HVP is only available for SGC".into()));
        };
        let c = self.classes();
        let mut out = vec![0.0; theta.len()];
        let mut probs = vec![0.0; c];
        let mut u = vec![0.0; c];
        for &(v, weight) in nodes {
            self.check_labeled(v)?;
            let zv = z.row(v);
            let logits = self.logits_with(theta, v, None);
            softmax_into(&logits, &mut probs);
            u.fill(0.0);
            for (i, &x) in zv.iter().enumerate() {
                if x != 0.0 {
                    for (ua, va) in u.iter_mut().zip(&vec[i * c..(i + 1) * c]) {
                        *ua += x * va;
                    }
                }
            }
            let pu: f64 = probs.iter().zip(&u).map(|(p, x)| p * x).sum();
            let s: Vec<f64> = probs
                .iter()
                .zip(&u)
                .map(|(p, x)| weight * p * (x - pu))
                .collect();
            for (i, &x) in zv.iter().enumerate() {
                if x != 0.0 {
                    for (o, sa) in out[i * c..(i + 1) * c].iter_mut().zip(&s) {
                        *o += x * sa;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Exact `Σ w_v ∇²CE(v) · vec` for the nonlinear model, by a directional
    /// forward pass followed by the differentiated backward pass. The ReLU is
    /// treated as piecewise linear (zero second derivative, fixed mask).
    pub fn gcn2_weighted_hvp(
        &self,
        theta: &[f64],
        nodes: &[(usize, f64)],
        vec: &[f64],
    ) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        self.check_theta(vec)?;
        let Propagated::Gcn2 { p, op, hidden } = &self.prop else {
            return Err(Error::Config("two-layer HVP called on a linear model".into()));
        };
        let (c, h, d) = (self.classes(), *hidden, p.cols());
        let state = self.hidden_state(theta).expect("hidden state");
        let (w2, v1, v2) = (&theta[d * h..], &vec[..d * h], &vec[d * h..]);
        // directional derivative of the hidden activations, masked by the ReLU
        let mut r_act = Matrix::zeros(p.rows(), h);
        for u in 0..p.rows() {
            let pre = state.pre.row(u);
            let out = r_act.row_mut(u);
            for (i, &x) in p.row(u).iter().enumerate() {
                if x != 0.0 {
                    for (o, w) in out.iter_mut().zip(&v1[i * h..(i + 1) * h]) {
                        *o += x * w;
                    }
                }
            }
            for (o, &z) in out.iter_mut().zip(pre) {
                if z <= 0.0 {
                    *o = 0.0;
                }
            }
        }
        let mut out = vec![0.0; theta.len()];
        let (o1, o2) = out.split_at_mut(d * h);
        let mut probs = vec![0.0; c];
        let matvec = |w: &[f64], x: &[f64]| -> Vec<f64> {
            (0..c)
                .map(|a| (0..h).map(|j| w[j * c + a] * x[j]).sum())
                .collect()
        };
        let rowdot = |w: &[f64], e: &[f64]| -> Vec<f64> {
            (0..h)
                .map(|j| w[j * c..(j + 1) * c].iter().zip(e).map(|(a, b)| a * b).sum())
                .collect()
        };
        for &(v, weight) in nodes {
            self.check_labeled(v)?;
            let mut agg = vec![0.0; h];
            let mut r_agg = vec![0.0; h];
            for (u, s) in op.row(v) {
                for ((a, ra), (x, rx)) in agg
                    .iter_mut()
                    .zip(r_agg.iter_mut())
                    .zip(state.act.row(u).iter().zip(r_act.row(u)))
                {
                    *a += s * x;
                    *ra += s * rx;
                }
            }
            let logits = matvec(w2, &agg);
            let r_logits: Vec<f64> = matvec(v2, &agg)
                .iter()
                .zip(matvec(w2, &r_agg))
                .map(|(a, b)| a + b)
                .collect();
            softmax_into(&logits, &mut probs);
            let pr: f64 = probs.iter().zip(&r_logits).map(|(a, b)| a * b).sum();
            let r_err: Vec<f64> = probs
                .iter()
                .zip(&r_logits)
                .map(|(q, r)| q * (r - pr))
                .collect();
            let mut err = probs.clone();
            err[self.graph.labels()[v]] -= 1.0;
            for j in 0..h {
                for a in 0..c {
                    o2[j * c + a] += weight * (r_agg[j] * err[a] + agg[j] * r_err[a]);
                }
            }
            let r_dagg: Vec<f64> = rowdot(v2, &err)
                .iter()
                .zip(rowdot(w2, &r_err))
                .map(|(a, b)| a + b)
                .collect();
            for (u, s) in op.row(v) {
                let pre = state.pre.row(u);
                let rd: Vec<f64> = (0..h)
                    .map(|j| if pre[j] > 0.0 { weight * s * r_dagg[j] } else { 0.0 })
                    .collect();
                if rd.iter().all(|&x| x == 0.0) {
                    continue;
                }
                for (i, &x) in p.row(u).iter().enumerate() {
                    if x != 0.0 {
                        for (o, r) in o1[i * h..(i + 1) * h].iter_mut().zip(&rd) {
                            *o += x * r;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Explicit `Σ w_v ∇²CE(v)` for the SGC model, `p × p`.
    ///
    /// With `A_v = diag(π_v) − π_v π_vᵀ` the node Hessian is `z_v z_vᵀ ⊗ A_v`,
    /// so the sum splits into one `d × d` Gram matrix per class for the
    /// diagonal part and `UᵀU` with rows `u_v = z_v ⊗ π_v`.
    pub fn sgc_weighted_hessian(&self, theta: &[f64], nodes: &[(usize, f64)]) -> Result<Matrix> {
        self.check_theta(theta)?;
        let Propagated::Sgc { z } = &self.prop else {
            return Err(Error::Config("analytic Hessian is only available for SGC".into()));
        };
        let c = self.classes();
        let d = z.cols();
        let p = d * c;
        let m = nodes.len();
        let mut probs = vec![0.0; c];
        let mut zs = DMatrix::<f64>::zeros(m, d);
        let mut pr = DMatrix::<f64>::zeros(m, c);
        for (row, &(v, _)) in nodes.iter().enumerate() {
            self.check_labeled(v)?;
            softmax_into(&self.logits_with(theta, v, None), &mut probs);
            for (i, &x) in z.row(v).iter().enumerate() {
                zs[(row, i)] = x;
            }
            for (a, &pa) in probs.iter().enumerate() {
                pr[(row, a)] = pa;
            }
        }
        let mut u = DMatrix::<f64>::zeros(m, p);
        let mut uw = DMatrix::<f64>::zeros(m, p);
        for row in 0..m {
            let w = nodes[row].1;
            for i in 0..d {
                let x = zs[(row, i)];
                if x == 0.0 {
                    continue;
                }
                for a in 0..c {
                    u[(row, i * c + a)] = x * pr[(row, a)];
                    uw[(row, i * c + a)] = w * x * pr[(row, a)];
                }
            }
        }
        let mut h = -(u.transpose() * &uw);
        for a in 0..c {
            let mut scaled = zs.clone();
            for row in 0..m {
                let f = nodes[row].1 * pr[(row, a)];
                scaled.row_mut(row).scale_mut(f);
            }
            let gram = zs.transpose() * &scaled;
            for i in 0..d {
                for j in 0..d {
                    h[(i * c + a, j * c + a)] += gram[(i, j)];
                }
            }
        }
        let mut out = Matrix::zeros(p, p);
        for i in 0..p {
            for (j, o) in out.row_mut(i).iter_mut().enumerate() {
                *o = h[(i, j)];
            }
        }
        Ok(out)
    }
}
