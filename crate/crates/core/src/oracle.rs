//! Ground truth: re-training on `G ⊖ ΔG`, the ξ-weighted intermediate
//! objective, parameter distances and empirical assumption constants.

use serde::{Deserialize, Serialize};

use crate::certify::{bound_approx, bound_optimals, AssumptionConstants};
use crate::error::{Error, Result};
use crate::graph::{delete, AttributedGraph};
use crate::influence::add_minus_sub;
use crate::linalg::{axpy, distance, norm};
use crate::model::{
    minimize, train, Differentiable, Forward, ModelSpec, Objective, TrainedModel, TrainerConfig,
};
use crate::request::{validate, AffectedSets, UnlearnRequest};

/// Re-trains on `delete(g, req)`, warm-started from the model's parameters.
pub fn retrain(
    model: &TrainedModel,
    g: &AttributedGraph,
    req: &UnlearnRequest,
    cfg: TrainerConfig,
) -> Result<(TrainedModel, AttributedGraph)> {
    model.check_invariants()?;
    model.check_graph(g)?;
    validate(g, req).into_result()?;
    let g_minus = delete(g, req)?.graph;
    let retrained = train(&model.spec, &g_minus, Some(model.theta.clone()), model.seed, cfg)?;
    Ok((retrained, g_minus))
}

/// `(1/m)Σ_{V_trn} ℓ(θ, v, G) + ξ(L_add − L_sub)`, where every per-node
/// loss `ℓ` carries `(λ/2)‖θ‖²`.
pub struct XiObjective<'g> {
    base: Objective<'g>,
    minus: Forward<'g>,
    sets: AffectedSets,
    xi: f64,
}

impl<'g> XiObjective<'g> {
    pub fn new(
        spec: &ModelSpec,
        g: &'g AttributedGraph,
        g_minus: &'g AttributedGraph,
        sets: AffectedSets,
        xi: f64,
    ) -> Result<Self> {
        if !xi.is_finite() {
            return Err(Error::Config("xi must be finite".into()));
        }
        Ok(Self {
            base: Objective::new(spec, g)?,
            minus: Forward::new(spec, g_minus)?,
            sets,
            xi,
        })
    }

    /// `m` of the original training set.
    pub fn m(&self) -> usize {
        self.base.m()
    }
}

impl Differentiable for XiObjective<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn value(&self, theta: &[f64]) -> Result<f64> {
        let (d, _, _, _) = add_minus_sub(self.base.forward(), &self.minus, &self.sets, theta, false)?;
        Ok(self.base.value(theta)? + self.xi * d)
    }

    fn value_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (v, mut g) = self.base.value_and_gradient(theta)?;
        let (d, dg, _, _) = add_minus_sub(self.base.forward(), &self.minus, &self.sets, theta, true)?;
        axpy(self.xi, &dg.expect("gradient requested"), &mut g);
        Ok((v + self.xi * d, g))
    }
}

/// Evaluates the ξ-weighted objective at `theta`.
pub fn xi_objective(
    spec: &ModelSpec,
    g: &AttributedGraph,
    g_minus: &AttributedGraph,
    sets: &AffectedSets,
    xi: f64,
    theta: &[f64],
) -> Result<f64> {
    XiObjective::new(spec, g, g_minus, sets.clone(), xi)?.value(theta)
}

/// Minimizes the ξ-weighted objective from `init`.
pub fn argmin_xi_objective(
    spec: &ModelSpec,
    g: &AttributedGraph,
    g_minus: &AttributedGraph,
    sets: &AffectedSets,
    xi: f64,
    init: Vec<f64>,
    cfg: TrainerConfig,
) -> Result<Vec<f64>> {
    let obj = XiObjective::new(spec, g, g_minus, sets.clone(), xi)?;
    Ok(minimize(&obj, init, cfg)?.0)
}

/// Distances between the original, re-trained and approximated parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distances {
    /// `‖θ* − θ̃*‖`.
    pub star_tilde: f64,
    /// `‖θ̃* − θ̄*‖`.
    pub tilde_bar: f64,
    /// `‖θ* − θ̄*‖`.
    pub star_bar: f64,
}

pub fn parameter_distances(
    theta_star: &[f64],
    theta_tilde: &[f64],
    theta_bar: &[f64],
) -> Result<Distances> {
    let p = theta_star.len();
    for other in [theta_tilde, theta_bar] {
        if other.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: other.len(),
            });
        }
    }
    Ok(Distances {
        star_tilde: distance(theta_star, theta_tilde),
        tilde_bar: distance(theta_tilde, theta_bar),
        star_bar: distance(theta_star, theta_bar),
    })
}

/// Number of interior points sampled on the `θ* → θ̃*` segment.
const SEGMENT_POINTS: usize = 10;

/// Measured surrogates for the assumption constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalConstants {
    /// Largest per-node gradient norm (cross-entropy plus regularizer share)
    /// over training nodes of both graphs, on the segment `θ* → θ̃*` and
    /// at `θ̄*`.
    pub lipschitz_l: f64,
    /// `reg_lambda`, the strong-convexity modulus of the objective.
    pub convexity_lambda: f64,
    /// Largest per-node loss at `θ*` and `θ̃*` on both graphs.
    pub loss_bound_c: f64,
}

impl EmpiricalConstants {
    pub fn as_constants(&self) -> AssumptionConstants {
        AssumptionConstants {
            lipschitz_l: self.lipschitz_l,
            convexity_lambda: self.convexity_lambda,
            loss_bound_c: self.loss_bound_c,
        }
    }

    /// Whether the configured constants dominate the measured ones.
    pub fn satisfied_by(&self, c: &AssumptionConstants) -> bool {
        self.lipschitz_l <= c.lipschitz_l
            && self.loss_bound_c <= c.loss_bound_c
            && c.convexity_lambda <= self.convexity_lambda
    }
}

fn per_node_loss_and_grad(
    fwd: &Forward<'_>,
    theta: &[f64],
    lambda: f64,
    grads: bool,
) -> Result<(f64, f64)> {
    let reg = 0.5 * lambda * crate::linalg::dot(theta, theta);
    let mut max_loss: f64 = 0.0;
    let mut max_grad: f64 = 0.0;
    for v in fwd.graph().train_nodes().iter() {
        let (l, g) = fwd.weighted_loss(theta, &[(v, 1.0)], grads)?;
        max_loss = max_loss.max(l + reg);
        if let Some(mut g) = g {
            axpy(lambda, theta, &mut g);
            max_grad = max_grad.max(norm(&g));
        }
    }
    Ok((max_loss, max_grad))
}

pub fn measure_empirical_constants(
    spec: &ModelSpec,
    g: &AttributedGraph,
    g_minus: &AttributedGraph,
    theta_star: &[f64],
    theta_tilde: &[f64],
    theta_bar: &[f64],
) -> Result<EmpiricalConstants> {
    let fwd = Forward::new(spec, g)?;
    let fwd_minus = Forward::new(spec, g_minus)?;
    let lambda = spec.reg_lambda;
    let mut l: f64 = 0.0;
    let mut c: f64 = 0.0;
    for i in 0..=SEGMENT_POINTS {
        let t = i as f64 / SEGMENT_POINTS as f64;
        let point: Vec<f64> = theta_star
            .iter()
            .zip(theta_tilde)
            .map(|(a, b)| a + t * (b - a))
            .collect();
        let endpoint = i == 0 || i == SEGMENT_POINTS;
        for f in [&fwd, &fwd_minus] {
            let (loss, grad) = per_node_loss_and_grad(f, &point, lambda, true)?;
            l = l.max(grad);
            if endpoint {
                c = c.max(loss);
            }
        }
    }
    for f in [&fwd, &fwd_minus] {
        l = l.max(per_node_loss_and_grad(f, theta_bar, lambda, true)?.1);
    }
    Ok(EmpiricalConstants {
        lipschitz_l: l,
        convexity_lambda: lambda,
        loss_bound_c: c,
    })
}

/// One unlearn run checked against its re-trained oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub distances: Distances,
    pub m: usize,
    pub delta_v_size: usize,
    pub v_tilde_size: usize,
    pub norm_delta_theta_bar: f64,
    pub empirical: EmpiricalConstants,
    pub bound_thm2_empirical: f64,
    pub bound_prop3_empirical: f64,
    pub bound_thm2_default: f64,
    pub bound_prop3_default: f64,
    /// Whether the configured constants dominate the measured ones.
    pub assumptions_hold: bool,
}

/// Compares an unlearned parameter vector with the re-trained one and
/// evaluates both bound variants.
#[allow(clippy::too_many_arguments)]
pub fn compare_with_oracle(
    spec: &ModelSpec,
    g: &AttributedGraph,
    g_minus: &AttributedGraph,
    theta_star: &[f64],
    theta_tilde: &[f64],
    theta_bar: &[f64],
    delta_theta_bar: &[f64],
    delta_v_size: usize,
    v_tilde_size: usize,
    configured: &AssumptionConstants,
) -> Result<OracleComparison> {
    let distances = parameter_distances(theta_star, theta_tilde, theta_bar)?;
    let empirical =
        measure_empirical_constants(spec, g, g_minus, theta_star, theta_tilde, theta_bar)?;
    let m = g.num_train();
    let ndtb = norm(delta_theta_bar);
    let emp = empirical.as_constants();
    Ok(OracleComparison {
        distances,
        m,
        delta_v_size,
        v_tilde_size,
        norm_delta_theta_bar: ndtb,
        empirical,
        bound_thm2_empirical: bound_optimals(&emp, m, delta_v_size, v_tilde_size)?,
        bound_prop3_empirical: bound_approx(&emp, m, delta_v_size, v_tilde_size, ndtb)?,
        bound_thm2_default: bound_optimals(configured, m, delta_v_size, v_tilde_size)?,
        bound_prop3_default: bound_approx(configured, m, delta_v_size, v_tilde_size, ndtb)?,
        assumptions_hold: empirical.satisfied_by(configured),
    })
}
