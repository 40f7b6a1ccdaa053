//! Distance bounds between the original, re-trained and approximated
//! optima, and Gaussian-mechanism calibration.
//!
//! # Noise sampler
//!
//! Certified parameters are `θ̄* + b` with `b ~ N(0, σ²I)`. The draws are
//! reproducible across implementations:
//!
//! 1. The generator is ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`).
//! 2. A uniform `u ∈ (0, 1]` is `((x >> 11) + 1) · 2⁻⁵³` for `x = next_u64()`.
//! 3. Box–Muller: for consecutive uniforms `u1, u2`, with
//!    `r = sqrt(−2 ln u1)` and `a = 2π·u2`, the pair `(r cos a, r sin a)`
//!    fills coordinates `2i` and `2i + 1`. An odd trailing coordinate uses
//!    the cosine half and discards the sine half.
//! 4. Each standard normal is multiplied by `σ`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::influence::InfluenceResult;
use crate::linalg::norm;

/// Lipschitz constant `L`, strong convexity `λ` and loss bound `C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionConstants {
    pub lipschitz_l: f64,
    pub convexity_lambda: f64,
    pub loss_bound_c: f64,
}

impl Default for AssumptionConstants {
    fn default() -> Self {
        Self {
            lipschitz_l: 0.25,
            convexity_lambda: 0.05,
            loss_bound_c: 3.0,
        }
    }
}

impl AssumptionConstants {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if ok(self.lipschitz_l) && ok(self.convexity_lambda) && ok(self.loss_bound_c) {
            Ok(())
        } else {
            Err(Error::Config(
                "assumption constants L, lambda, C must be finite and > 0".into(),
            ))
        }
    }
}

/// `‖θ̃* − θ*‖` bound:
/// `(L|ΔV| + sqrt(4mλC|Ṽ| + L²|ΔV|²)) / (mλ)`.
pub fn bound_optimals(
    c: &AssumptionConstants,
    m: usize,
    delta_v_size: usize,
    v_tilde_size: usize,
) -> Result<f64> {
    c.validate()?;
    if m == 0 {
        return Err(Error::EmptySet("training set (m = 0)"));
    }
    let (l, lam, cc) = (c.lipschitz_l, c.convexity_lambda, c.loss_bound_c);
    let (m, dv, vt) = (m as f64, delta_v_size as f64, v_tilde_size as f64);
    let root = (4.0 * m * lam * cc * vt + l * l * dv * dv).sqrt();
    Ok((l * dv + root) / (m * lam))
}

/// `‖θ̃* − θ̄*‖` bound: `bound_optimals + ‖Δθ̄*‖/m`.
pub fn bound_approx(
    c: &AssumptionConstants,
    m: usize,
    delta_v_size: usize,
    v_tilde_size: usize,
    norm_dtb: f64,
) -> Result<f64> {
    if !(norm_dtb >= 0.0) {
        return Err(Error::Config("‖Δθ̄‖ must be >= 0".into()));
    }
    Ok(bound_optimals(c, m, delta_v_size, v_tilde_size)? + norm_dtb / m as f64)
}

fn noise_factor(delta: f64) -> f64 {
    (2.0 * (1.25 / delta).ln()).sqrt()
}

fn check_privacy(epsilon: f64, delta: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Config("epsilon must be finite and > 0".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config("delta must lie in (0, 1)".into()));
    }
    Ok(())
}

/// Smallest admissible `σ = (ζ/ε)·sqrt(2 ln(1.25/δ))`.
pub fn calibrate_sigma(zeta: f64, epsilon: f64, delta: f64) -> Result<f64> {
    check_privacy(epsilon, delta)?;
    if !(zeta >= 0.0 && zeta.is_finite()) {
        return Err(Error::Config("zeta must be finite and >= 0".into()));
    }
    Ok(zeta / epsilon * noise_factor(delta))
}

/// The `ε` at which a fixed `σ` is exactly the calibrated noise for `ζ`.
pub fn implied_epsilon(zeta: f64, sigma: f64, delta: f64) -> Result<f64> {
    check_privacy(1.0, delta)?;
    if !(sigma > 0.0) {
        return Err(Error::Config("sigma must be > 0 to imply an epsilon".into()));
    }
    Ok(zeta * noise_factor(delta) / sigma)
}

/// Seeded standard-normal stream (see the module docs for the algorithm).
pub struct GaussianSampler {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform on `(0, 1]`.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let a = std::f64::consts::TAU * u2;
        self.spare = Some(r * a.sin());
        r * a.cos()
    }
}

/// `p` draws from `N(0, σ²)`.
pub fn gaussian_noise(seed: u64, p: usize, sigma: f64) -> Vec<f64> {
    let mut s = GaussianSampler::new(seed);
    (0..p).map(|_| sigma * s.standard_normal()).collect()
}

/// Privacy targets and noise source for one certification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyConfig {
    pub constants: AssumptionConstants,
    pub epsilon: f64,
    pub delta: f64,
    pub noise_seed: u64,
    /// Use this `σ` instead of calibrating from `ε`; the report then carries
    /// the `ε` this `σ` certifies.
    pub sigma: Option<f64>,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            constants: AssumptionConstants::default(),
            epsilon: 1.0,
            delta: 0.01,
            noise_seed: 0,
            sigma: None,
        }
    }
}

/// Bound inputs taken from the request and graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub m: usize,
    pub delta_v_size: usize,
    pub v_tilde_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub constants: AssumptionConstants,
    pub bound_thm2: f64,
    /// `ζ`, the bound on `‖θ̃* − θ̄*‖`.
    pub bound_prop3: f64,
    pub delta_v_size: usize,
    pub v_tilde_size: usize,
    pub m: usize,
    pub norm_delta_theta_bar: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub sigma: f64,
    pub sigma_fixed: bool,
    pub noise_seed: u64,
    pub actual_distance: Option<f64>,
}

/// Computes both bounds, calibrates `σ` and adds the seeded noise to `θ̄*`.
pub fn certify(
    result: &InfluenceResult,
    inputs: BoundInputs,
    cfg: &CertifyConfig,
) -> Result<(Vec<f64>, CertificateReport)> {
    let norm_dtb = norm(&result.delta_theta_bar);
    let c = &cfg.constants;
    let bound_thm2 = bound_optimals(c, inputs.m, inputs.delta_v_size, inputs.v_tilde_size)?;
    let bound_prop3 = bound_approx(c, inputs.m, inputs.delta_v_size, inputs.v_tilde_size, norm_dtb)?;
    let (sigma, epsilon) = match cfg.sigma {
        None => (calibrate_sigma(bound_prop3, cfg.epsilon, cfg.delta)?, cfg.epsilon),
        Some(s) if s > 0.0 && s.is_finite() => (s, implied_epsilon(bound_prop3, s, cfg.delta)?),
        Some(_) => return Err(Error::Config("fixed sigma must be finite and > 0".into())),
    };
    let theta = if sigma == 0.0 {
        result.theta_bar.clone()
    } else {
        result
            .theta_bar
            .iter()
            .zip(gaussian_noise(cfg.noise_seed, result.theta_bar.len(), sigma))
            .map(|(t, b)| t + b)
            .collect()
    };
    Ok((
        theta,
        CertificateReport {
            constants: *c,
            bound_thm2,
            bound_prop3,
            delta_v_size: inputs.delta_v_size,
            v_tilde_size: inputs.v_tilde_size,
            m: inputs.m,
            norm_delta_theta_bar: norm_dtb,
            epsilon,
            delta: cfg.delta,
            sigma,
            sigma_fixed: cfg.sigma.is_some(),
            noise_seed: cfg.noise_seed,
            actual_distance: None,
        },
    ))
}
