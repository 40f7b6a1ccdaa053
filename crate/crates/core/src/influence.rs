//! Influence-function unlearning: `θ̄* = θ* + Δθ̄*/m` with
//! `Δθ̄* = −H⁻¹(∇L_add − ∇L_sub)`.
//!
//! Only labeled training nodes contribute loss terms: `L_add` sums over the
//! members of `V_i` that are training nodes of `G ⊖ ΔG`, `L_sub` over the
//! members of `Ṽ_i` that are training nodes of `G`. Each training node's
//! loss carries its share `(λ/2)‖θ‖²` of the regularizer, so for node
//! deletions the difference picks up `−|ΔV ∩ V_trn|·λθ`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{delete, AttributedGraph, NodeSet};
use crate::linalg::{all_finite, axpy, dot, norm, Matrix};
use crate::model::{Forward, Objective, TrainedModel};
use crate::request::{
    compute_affected_sets, split_for_serializability, validate, AffectedSets, UnlearnRequest,
};

/// Largest system solved by dense factorization.
pub const DIRECT_CEILING: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Solver {
    /// Direct for `p <= DIRECT_CEILING`, CG otherwise.
    Auto,
    Direct,
    Cg { tol: f64, max_iters: usize },
    /// Truncated Neumann series; `scale = None` estimates `1.1·λ_max` by
    /// power iteration.
    Stochastic { t: usize, scale: Option<f64>, damp: f64 },
}

impl Default for Solver {
    fn default() -> Self {
        Solver::Auto
    }
}

impl Solver {
    pub fn cg() -> Self {
        Solver::Cg {
            tol: 1e-8,
            max_iters: 10_000,
        }
    }

    pub fn stochastic(t: usize) -> Self {
        Solver::Stochastic {
            t,
            scale: None,
            damp: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Direct,
    Cg,
    Stochastic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub kind: SolverKind,
    pub iterations: usize,
    /// `‖H·x − b‖` of the returned solution.
    pub residual_norm: f64,
    pub wall_secs: f64,
    pub warning: Option<String>,
}

/// Dense Cholesky solve of `H x = b`.
pub fn solve_direct(h: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let p = b.len();
    if h.rows() != p || h.cols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: h.rows(),
        });
    }
    if p > DIRECT_CEILING {
        return Err(Error::TooLargeForDirect {
            size: p,
            ceiling: DIRECT_CEILING,
        });
    }
    let m = DMatrix::from_row_slice(p, p, h.as_slice());
    let chol = m.cholesky().ok_or(Error::NotPositiveDefinite)?;
    let x = chol.solve(&DVector::from_column_slice(b));
    Ok(x.iter().copied().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
}

/// Conjugate gradient for an SPD operator, stopping at
/// `‖r‖ ≤ tol·‖b‖`. Hitting `max_iters` is reported through `converged`.
pub fn solve_cg<F>(op: F, b: &[f64], tol: f64, max_iters: usize) -> Result<CgOutcome>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let p = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; p];
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            residual_norm: 0.0,
            converged: true,
        });
    }
    let mut r = b.to_vec();
    let mut d = r.clone();
    let mut rr = dot(&r, &r);
    let target = tol * bnorm;
    let mut iterations = 0;
    while rr.sqrt() > target && iterations < max_iters {
        let hd = op(&d)?;
        let dhd = dot(&d, &hd);
        if dhd <= 0.0 || !dhd.is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
        let alpha = rr / dhd;
        axpy(alpha, &d, &mut x);
        axpy(-alpha, &hd, &mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for (di, ri) in d.iter_mut().zip(&r) {
            *di = ri + beta * *di;
        }
        rr = rr_new;
        iterations += 1;
    }
    Ok(CgOutcome {
        x,
        iterations,
        residual_norm: rr.sqrt(),
        converged: rr.sqrt() <= target,
    })
}

/// Truncated Neumann-series estimate of `(H + damp·I)⁻¹ b`:
/// `v₀ = b`, `v_j = b + (I − (H + damp·I)/scale)·v_{j−1}`, result `v_t / scale`.
///
/// Divergence is declared when the increment `‖v_j − v_{j−1}‖` grows for 10
/// consecutive steps (the partial sums themselves grow monotonically in the
/// convergent case).
pub fn solve_stochastic<F>(op: F, b: &[f64], t: usize, scale: f64, damp: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if t < 1 {
        return Err(Error::Config("stochastic estimator needs t >= 1".into()));
    }
    if !(scale > 0.0) {
        return Err(Error::Config("stochastic scale must be positive".into()));
    }
    let mut v = b.to_vec();
    let mut prev_step = f64::INFINITY;
    let mut growing = 0;
    for j in 1..=t {
        let hv = op(&v)?;
        let next: Vec<f64> = b
            .iter()
            .zip(&v)
            .zip(&hv)
            .map(|((bi, vi), hvi)| bi + vi - (hvi + damp * vi) / scale)
            .collect();
        let step = crate::linalg::distance(&next, &v);
        if !step.is_finite() || !all_finite(&next) {
            return Err(Error::ScaleTooSmall {
                iteration: j,
                scale,
            });
        }
        if step > prev_step {
            growing += 1;
            if growing >= 10 {
                return Err(Error::ScaleTooSmall {
                    iteration: j,
                    scale,
                });
            }
        } else {
            growing = 0;
        }
        prev_step = step;
        v = next;
    }
    for vi in v.iter_mut() {
        *vi /= scale;
    }
    Ok(v)
}

/// Power-iteration estimate of the largest eigenvalue of an SPD operator.
pub fn estimate_max_eigenvalue<F>(op: F, p: usize, iters: usize) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    // A constant start vector is orthogonal to the top eigenvector of the
    // softmax Hessian (shifting all class columns equally is in its kernel).
    let mut v: Vec<f64> = (0..p).map(|i| ((i + 1) as f64 * 0.754_877_666).sin() + 0.1).collect();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    let mut lambda = 0.0;
    for _ in 0..iters {
        let hv = op(&v)?;
        lambda = dot(&v, &hv);
        let n = norm(&hv);
        if n == 0.0 {
            return Ok(0.0);
        }
        v = hv.into_iter().map(|x| x / n).collect();
    }
    Ok(lambda)
}

/// Solves `H x = b` with the chosen solver, where `H` is the Hessian of `obj`
/// at `theta`.
pub fn solve_hessian_system(
    obj: &Objective<'_>,
    theta: &[f64],
    b: &[f64],
    solver: Solver,
) -> Result<(Vec<f64>, SolverStats)> {
    let start = Instant::now();
    let p = b.len();
    let solver = match solver {
        Solver::Auto if p <= DIRECT_CEILING => Solver::Direct,
        Solver::Auto => Solver::cg(),
        s => s,
    };
    let op = |v: &[f64]| obj.hvp(theta, v);
    let (x, kind, iterations, warning) = match solver {
        Solver::Direct => {
            let h = obj.hessian(theta)?;
            (solve_direct(&h, b)?, SolverKind::Direct, 1, None)
        }
        Solver::Cg { tol, max_iters } => {
            let out = solve_cg(op, b, tol, max_iters)?;
            let warning = (!out.converged).then(|| {
                format!(
                    "CG stopped after {} iterations with residual {:.3e}",
                    out.iterations, out.residual_norm
                )
            });
            (out.x, SolverKind::Cg, out.iterations, warning)
        }
        Solver::Stochastic { t, scale, damp } => {
            let scale = match scale {
                Some(s) => s,
                None => 1.1 * (estimate_max_eigenvalue(op, p, 100)? + damp),
            };
            (
                solve_stochastic(op, b, t, scale, damp)?,
                SolverKind::Stochastic,
                t,
                None,
            )
        }
        Solver::Auto => unreachable!("resolved above"),
    };
    let hx = obj.hvp(theta, &x)?;
    let residual_norm = crate::linalg::distance(&hx, b);
    Ok((
        x,
        SolverStats {
            kind,
            iterations,
            residual_norm,
            wall_secs: start.elapsed().as_secs_f64(),
            warning,
        },
    ))
}

/// Weighted node lists for `L_add` and `L_sub`. Categories are combined
/// with set-union semantics so a node reached through two categories
/// contributes once.
pub(crate) fn add_sub_terms(
    g: &AttributedGraph,
    g_minus: &AttributedGraph,
    sets: &AffectedSets,
) -> (Vec<(usize, f64)>, Vec<(usize, f64)>) {
    let mut add = NodeSet::default();
    let mut sub = NodeSet::default();
    for i in 0..4 {
        if sets.alphas[i] {
            add = add.union(sets.add_sets()[i]);
            sub = sub.union(sets.sub_sets()[i]);
        }
    }
    (
        add.iter()
            .filter(|&v| g_minus.train_mask()[v])
            .map(|v| (v, 1.0))
            .collect(),
        sub.iter()
            .filter(|&v| g.train_mask()[v])
            .map(|v| (v, 1.0))
            .collect(),
    )
}

/// `Σ_add w·ℓ(θ, v, G⊖ΔG) − Σ_sub w·ℓ(θ, v, G)` where `ℓ` is the per-node
/// cross-entropy plus `(λ/2)‖θ‖²`. Returns the value and, optionally, the
/// gradient.
pub(crate) fn add_minus_sub(
    fwd: &Forward<'_>,
    fwd_minus: &Forward<'_>,
    sets: &AffectedSets,
    theta: &[f64],
    with_grad: bool,
) -> Result<(f64, Option<Vec<f64>>, usize, usize)> {
    let (add, sub) = add_sub_terms(fwd.graph(), fwd_minus.graph(), sets);
    let lambda = fwd.spec().reg_lambda;
    let (va, ga) = fwd_minus.weighted_loss(theta, &add, with_grad)?;
    let (vs, gs) = fwd.weighted_loss(theta, &sub, with_grad)?;
    let net = add.len() as f64 - sub.len() as f64;
    let value = va - vs + net * 0.5 * lambda * dot(theta, theta);
    let grad = match (ga, gs) {
        (Some(mut ga), Some(gs)) => {
            axpy(-1.0, &gs, &mut ga);
            axpy(net * lambda, theta, &mut ga);
            Some(ga)
        }
        _ => None,
    };
    Ok((value, grad, add.len(), sub.len()))
}

/// `∇L_add − ∇L_sub` at the model's parameters.
pub fn grad_add_minus_sub(
    model: &TrainedModel,
    g: &AttributedGraph,
    g_minus: &AttributedGraph,
    sets: &AffectedSets,
) -> Result<Vec<f64>> {
    model.check_graph(g)?;
    let fwd = Forward::new(&model.spec, g)?;
    let fwd_minus = Forward::new(&model.spec, g_minus)?;
    let (_, grad, _, _) = add_minus_sub(&fwd, &fwd_minus, sets, &model.theta, true)?;
    Ok(grad.expect("gradient requested"))
}

/// Diagnostics of one serial pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassDiagnostics {
    pub set_sizes: SetSizes,
    pub alphas: [bool; 4],
    pub same_category_overlap: [bool; 4],
    pub m: usize,
    pub add_terms: usize,
    pub sub_terms: usize,
    pub grad_diff_norm: f64,
    pub delta_theta_norm: f64,
    pub solver: SolverStats,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SetSizes {
    pub v1: usize,
    pub v2: usize,
    pub v3: usize,
    pub v4: usize,
    pub v1t: usize,
    pub v2t: usize,
    pub v3t: usize,
    pub v4t: usize,
    pub v_tilde: usize,
}

impl From<&AffectedSets> for SetSizes {
    fn from(s: &AffectedSets) -> Self {
        Self {
            v1: s.v1.len(),
            v2: s.v2.len(),
            v3: s.v3.len(),
            v4: s.v4.len(),
            v1t: s.v1t.len(),
            v2t: s.v2t.len(),
            v3t: s.v3t.len(),
            v4t: s.v4t.len(),
            v_tilde: s.v_tilde.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceResult {
    /// `Δθ̄*`; for multi-pass runs the composite `m·(θ̄* − θ*)`.
    pub delta_theta_bar: Vec<f64>,
    /// `∇L_add − ∇L_sub`; summed over passes for multi-pass runs.
    pub grad_diff: Vec<f64>,
    pub theta_star: Vec<f64>,
    pub theta_bar: Vec<f64>,
    pub solver: SolverKind,
    pub solver_stats: SolverStats,
    pub m_used: usize,
    pub passes: Vec<PassDiagnostics>,
}

/// Everything an unlearning call produces.
#[derive(Debug, Clone)]
pub struct UnlearnOutcome {
    pub result: InfluenceResult,
    /// Affected sets of the whole request on the original graph.
    pub sets: AffectedSets,
    /// `G ⊖ ΔG`.
    pub graph: AttributedGraph,
    pub model: TrainedModel,
}

impl UnlearnOutcome {
    pub fn delta_v_size(&self, req: &UnlearnRequest) -> usize {
        req.nodes.len()
    }
}

/// Unlearns `req` from `model` (trained on `g`), splitting the request into
/// serial passes when its categories overlap.
pub fn unlearn(
    model: &TrainedModel,
    g: &AttributedGraph,
    req: &UnlearnRequest,
    solver: Solver,
) -> Result<UnlearnOutcome> {
    let start = Instant::now();
    model.check_invariants()?;
    model.check_graph(g)?;
    validate(g, req).into_result()?;
    let k = model.spec.k;
    let sets = compute_affected_sets(g, req, k)?;
    let m0 = g.num_train();
    let p = model.theta.len();

    let batch = split_for_serializability(g, req, k)?;
    let mut theta = model.theta.clone();
    let mut graph = g.clone();
    let mut grad_sum = vec![0.0; p];
    let mut passes = Vec::new();
    let mut single_delta = None;

    for pass in &batch.passes {
        let r = pass.restricted_to(&graph);
        if r.is_empty() {
            continue;
        }
        let pass_sets = compute_affected_sets(&graph, &r, k)?;
        let deletion = delete(&graph, &r)?;
        let m = graph.num_train();
        let obj = Objective::new(&model.spec, &graph)?;
        let fwd_minus = Forward::new(&model.spec, &deletion.graph)?;
        let (_, gd, add_terms, sub_terms) =
            add_minus_sub(obj.forward(), &fwd_minus, &pass_sets, &theta, true)?;
        let gd = gd.expect("gradient requested");
        let neg: Vec<f64> = gd.iter().map(|x| -x).collect();
        let (delta, stats) = solve_hessian_system(&obj, &theta, &neg, solver)?;
        let step = 1.0 / m.max(1) as f64;
        axpy(step, &delta, &mut theta);
        axpy(1.0, &gd, &mut grad_sum);
        passes.push(PassDiagnostics {
            set_sizes: SetSizes::from(&pass_sets),
            alphas: pass_sets.alphas,
            same_category_overlap: pass_sets.same_category_overlap,
            m,
            add_terms,
            sub_terms,
            grad_diff_norm: norm(&gd),
            delta_theta_norm: norm(&delta),
            solver: stats,
            warnings: deletion.warnings,
        });
        single_delta = Some(delta);
        graph = deletion.graph;
    }

    let delta_theta_bar = match (passes.len(), single_delta) {
        (1, Some(d)) => d,
        _ => theta
            .iter()
            .zip(&model.theta)
            .map(|(a, b)| (a - b) * m0 as f64)
            .collect(),
    };
    let solver_stats = aggregate_stats(&passes, start.elapsed().as_secs_f64());
    let result = InfluenceResult {
        delta_theta_bar,
        grad_diff: grad_sum,
        theta_star: model.theta.clone(),
        theta_bar: theta.clone(),
        solver: solver_stats.kind,
        solver_stats,
        m_used: m0,
        passes,
    };
    Ok(UnlearnOutcome {
        model: model.with_theta(theta),
        result,
        sets,
        graph,
    })
}

fn aggregate_stats(passes: &[PassDiagnostics], wall_secs: f64) -> SolverStats {
    let kind = passes
        .first()
        .map(|p| p.solver.kind)
        .unwrap_or(SolverKind::Direct);
    SolverStats {
        kind,
        iterations: passes.iter().map(|p| p.solver.iterations).sum(),
        residual_norm: passes
            .iter()
            .map(|p| p.solver.residual_norm)
            .fold(0.0, f64::max),
        wall_secs,
        warning: passes.iter().find_map(|p| p.solver.warning.clone()),
    }
}
