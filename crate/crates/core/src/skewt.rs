//! Skew-t extension: mixing weights `γ_t` and the degrees of freedom φ.
//!
//! With `γ_t ~ Ga(φ/2, φ/2)` scaling both `Z_t` and `ε_t`, the remaining
//! conditionals are the skew-normal ones with every observation weighted by
//! `γ_t` (see [`crate::gibbs`]). φ is updated by an independence
//! Metropolis–Hastings step whose proposal is the Laplace approximation of
//! its log-concave conditional.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use statrs::function::gamma::{digamma, ln_gamma};

use crate::distributions::{draw_gamma, draw_trunc_normal};
use crate::error::{Error, Result};
use crate::model::{residuals, Dataset, LatentState, ModelParams};
use crate::numerics::SpdMatrix;

/// Proposals at or below this value are rejected, so the chain stays where
/// the skew-t covariance exists.
pub const VARPHI_MIN: f64 = 2.1;

/// Shape and rate of `γ_t | ·`: `Ga((φ + 2N)/2, (φ + Z_tᵀZ_t + e_tᵀΩe_t)/2)`.
pub fn gamma_conditional(omega: &SpdMatrix, z_t: &DVector<f64>, e_t: &DVector<f64>, varphi: f64) -> (f64, f64) {
    let n = z_t.len() as f64;
    let quad = e_t.dot(&(omega.matrix() * e_t));
    ((varphi + 2.0 * n) / 2.0, (varphi + z_t.dot(z_t) + quad) / 2.0)
}

/// Draws `γ_t` for observation `t`.
pub fn update_gamma_t<R: Rng + ?Sized>(
    params: &ModelParams,
    latent: &LatentState,
    data: &Dataset,
    varphi: f64,
    t: usize,
    rng: &mut R,
) -> Result<f64> {
    let z_t = latent.z_row(t);
    let e_t = data.row(t) - &params.mu - &params.delta * &z_t;
    let (shape, rate) = gamma_conditional(&params.omega, &z_t, &e_t, varphi);
    draw_gamma(shape, rate, rng)
}

/// Draws every `γ_t` (they are conditionally independent).
pub fn update_gamma_all<R: Rng + ?Sized>(
    params: &ModelParams,
    z: &DMatrix<f64>,
    data: &Dataset,
    varphi: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let e = residuals(params, z, data);
    let mut gamma = DVector::zeros(data.t());
    for t in 0..data.t() {
        let (shape, rate) = gamma_conditional(
            &params.omega,
            &z.row(t).transpose(),
            &e.row(t).transpose(),
            varphi,
        );
        gamma[t] = draw_gamma(shape, rate, rng)?;
    }
    Ok(gamma)
}

/// Trigamma function `ψ′(x)` for `x > 0`.
pub fn trigamma(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // asymptotic series: 1/x + 1/(2x²) + Σ B_{2k}/x^{2k+1}
    let series = inv
        + 0.5 * inv2
        + inv * inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0))));
    acc + series
}

/// `b̂_φ = b_φ + (log 2/2)T + ½Σ(γ_t − log γ_t)`.
pub fn varphi_rate(gamma: &DVector<f64>, b_varphi: f64) -> f64 {
    let t = gamma.len() as f64;
    b_varphi + std::f64::consts::LN_2 / 2.0 * t + 0.5 * gamma.iter().map(|g| g - g.ln()).sum::<f64>()
}

/// Log conditional of φ up to a constant:
/// `f(φ) = (φT/2 + a − 1) log φ − T log Γ(φ/2) − b̂ φ`.
pub fn varphi_log_target(varphi: f64, t: usize, a: f64, b_hat: f64) -> f64 {
    let t = t as f64;
    (varphi * t / 2.0 + a - 1.0) * varphi.ln() - t * ln_gamma(varphi / 2.0) - b_hat * varphi
}

/// `f′(φ) = (T/2) log φ + T/2 + (a − 1)/φ − (T/2) ψ(φ/2) − b̂`.
pub fn varphi_grad(varphi: f64, t: usize, a: f64, b_hat: f64) -> f64 {
    let t = t as f64;
    t / 2.0 * varphi.ln() + t / 2.0 + (a - 1.0) / varphi - t / 2.0 * digamma(varphi / 2.0) - b_hat
}

/// `f″(φ) = (T/2)(1/φ − ψ′(φ/2)/2) − (a − 1)/φ²`.
pub fn varphi_hess(varphi: f64, t: usize, a: f64) -> f64 {
    let t = t as f64;
    t / 2.0 * (1.0 / varphi - 0.5 * trigamma(varphi / 2.0)) - (a - 1.0) / (varphi * varphi)
}

const MODE_MAX_ITER: usize = 200;
const MODE_GRAD_TOL: f64 = 1e-10;

/// Mode of `f` by Newton's method safeguarded with a bisection bracket.
pub fn varphi_mode_find(t: usize, a: f64, b_hat: f64) -> Result<f64> {
    if !(b_hat > 0.0) {
        return Err(Error::NonPositiveParameter {
            name: "b_hat",
            value: b_hat,
        });
    }
    let grad = |x: f64| varphi_grad(x, t, a, b_hat);
    let mut lo = 1.0;
    let mut hi = 1.0;
    let mut expand = 0;
    while grad(lo) <= 0.0 {
        lo /= 2.0;
        expand += 1;
        if expand > 200 {
            return Err(Error::NoConvergence { iterations: expand });
        }
    }
    while grad(hi) >= 0.0 {
        hi *= 2.0;
        expand += 1;
        if expand > 200 {
            return Err(Error::NoConvergence { iterations: expand });
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..MODE_MAX_ITER {
        let g = grad(x);
        if g.abs() < MODE_GRAD_TOL {
            return Ok(x);
        }
        if g > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(x);
        }
        let h = varphi_hess(x, t, a);
        let newton = x - g / h;
        x = if h < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::NoConvergence {
        iterations: MODE_MAX_ITER,
    })
}

/// Independence Metropolis–Hastings step for φ with proposal
/// `N⁺(φ*, −1/f″(φ*))`. Returns the new value and whether it was accepted.
pub fn update_varphi_mh<R: Rng + ?Sized>(
    varphi: f64,
    gamma: &DVector<f64>,
    a_varphi: f64,
    b_varphi: f64,
    rng: &mut R,
) -> Result<(f64, bool)> {
    if gamma.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::InvalidData("mixing weights must be positive".into()));
    }
    let t = gamma.len();
    let b_hat = varphi_rate(gamma, b_varphi);
    let mode = varphi_mode_find(t, a_varphi, b_hat)?;
    let variance = -1.0 / varphi_hess(mode, t, a_varphi);
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::NonPositiveParameter {
            name: "varphi proposal variance",
            value: variance,
        });
    }
    let proposal = draw_trunc_normal(mode, variance, 0.0, f64::INFINITY, rng)?;
    let u: f64 = rng.random();
    if proposal <= VARPHI_MIN {
        return Ok((varphi, false));
    }
    let log_q = |x: f64| -0.5 * (x - mode) * (x - mode) / variance;
    let log_ratio = varphi_log_target(proposal, t, a_varphi, b_hat) - varphi_log_target(varphi, t, a_varphi, b_hat)
        + log_q(varphi)
        - log_q(proposal);
    if u.ln() < log_ratio {
        Ok((proposal, true))
    } else {
        Ok((varphi, false))
    }
}
