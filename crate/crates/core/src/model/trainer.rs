//! Deterministic full-batch gradient descent with Armijo backtracking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, axpy, dot, norm};

/// A smooth objective over a flat parameter vector.
pub trait Differentiable {
    fn dim(&self) -> usize;
    fn value(&self, theta: &[f64]) -> Result<f64>;
    fn value_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 50_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    pub iterations: usize,
    pub grad_norm: f64,
    pub final_loss: f64,
    pub converged: bool,
}

const ARMIJO_C: f64 = 1e-4;
const SHRINK: f64 = 0.5;
const MIN_STEP: f64 = 1e-20;

/// Minimizes `obj` from `init` until `‖∇‖ ≤ tol` or `max_iters`.
///
/// A step is accepted when the Armijo condition holds, or when the loss
/// change is below floating-point resolution and the gradient norm shrinks
/// (close to the optimum the Armijo decrease drops under rounding noise).
pub fn minimize<D: Differentiable + ?Sized>(
    obj: &D,
    init: Vec<f64>,
    cfg: TrainerConfig,
) -> Result<(Vec<f64>, TrainDiagnostics)> {
    if cfg.tol <= 0.0 {
        return Err(Error::Config("trainer tolerance must be positive".into()));
    }
    if init.len() != obj.dim() {
        return Err(Error::DimensionMismatch {
            expected: obj.dim(),
            got: init.len(),
        });
    }
    let mut theta = init;
    let (mut loss, mut grad) = obj.value_and_gradient(&theta)?;
    let mut gnorm = norm(&grad);
    check_finite(0, loss, gnorm)?;
    let mut step: f64 = 1.0;
    let mut iterations = 0;
    let mut candidate = theta.clone();

    while gnorm > cfg.tol && iterations < cfg.max_iters {
        let g2 = dot(&grad, &grad);
        step = (step * 2.0).min(1e6);
        let mut accepted = None;
        while step >= MIN_STEP {
            candidate.copy_from_slice(&theta);
            axpy(-step, &grad, &mut candidate);
            let trial = obj.value(&candidate)?;
            if trial.is_finite() {
                if trial <= loss - ARMIJO_C * step * g2 {
                    accepted = Some(obj.value_and_gradient(&candidate)?);
                    break;
                }
                if trial <= loss + 4.0 * f64::EPSILON * loss.abs() {
                    let (l2, gr2) = obj.value_and_gradient(&candidate)?;
                    if norm(&gr2) < gnorm {
                        accepted = Some((l2, gr2));
                        break;
                    }
                }
            }
            step *= SHRINK;
        }
        let Some((l2, g2v)) = accepted else {
            // No representable descent step left.
            break;
        };
        std::mem::swap(&mut theta, &mut candidate);
        loss = l2;
        grad = g2v;
        gnorm = norm(&grad);
        iterations += 1;
        check_finite(iterations, loss, gnorm)?;
    }
    if !all_finite(&theta) {
        return Err(Error::Divergence {
            iterations,
            loss,
            grad_norm: gnorm,
        });
    }
    Ok((
        theta,
        TrainDiagnostics {
            iterations,
            grad_norm: gnorm,
            final_loss: loss,
            converged: gnorm <= cfg.tol,
        },
    ))
}

fn check_finite(iterations: usize, loss: f64, grad_norm: f64) -> Result<()> {
    if loss.is_finite() && grad_norm.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence {
            iterations,
            loss,
            grad_norm,
        })
    }
}
