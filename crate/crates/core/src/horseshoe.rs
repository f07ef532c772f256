//! Horseshoe shrinkage for δ and the graphical horseshoe block sampler for Ω.
//!
//! Half-Cauchy scales are written as inverse-gamma mixtures, so every
//! hyperparameter has a conjugate inverse-gamma conditional. Ω is updated one
//! row/column at a time through `η = ω₁₁ − ω₂₁ᵀΩ₂₂⁻¹ω₂₁`, and the off-diagonal
//! block takes a single Hit-and-Run move inside the region that keeps Ω
//! positive definite.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::distributions::{draw_gamma, draw_inv_gamma, draw_trunc_normal, std_normal_vec};
use crate::error::{Error, Result};
use crate::model::PriorConfig;
use crate::numerics::{partition_at, SpdMatrix};

/// Local scales `λ²`, global scale `τ²` and their auxiliaries `ν`, `ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaShrinkState {
    pub lambda2: DVector<f64>,
    pub tau2: f64,
    pub nu: DVector<f64>,
    pub xi: f64,
}

impl DeltaShrinkState {
    /// `ν_j, ξ ~ IG(½, 1)`, then `λ_j² ~ IG(½, 1/ν_j)` and `τ² ~ IG(½, 1/ξ)`.
    pub fn from_prior<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Result<Self> {
        let nu = DVector::from_iterator(len, (0..len).map(|_| draw_inv_gamma(0.5, 1.0, rng)).collect::<Result<Vec<_>>>()?);
        let xi = draw_inv_gamma(0.5, 1.0, rng)?;
        let lambda2 = nu.iter().map(|v| draw_inv_gamma(0.5, 1.0 / v, rng)).collect::<Result<Vec<_>>>()?;
        let tau2 = draw_inv_gamma(0.5, 1.0 / xi, rng)?;
        Ok(DeltaShrinkState {
            lambda2: DVector::from_vec(lambda2),
            tau2,
            nu,
            xi,
        })
    }

    pub fn len(&self) -> usize {
        self.lambda2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda2.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("lambda2", self.lambda2.iter().copied())?;
        check_positive("nu", self.nu.iter().copied())?;
        check_positive("tau2", [self.tau2])?;
        check_positive("xi", [self.xi])?;
        if self.nu.len() != self.lambda2.len() {
            return Err(Error::DimensionMismatch {
                expected: self.lambda2.len(),
                got: self.nu.len(),
            });
        }
        Ok(())
    }
}

/// Graphical horseshoe scales over the strict upper triangle of Ω.
///
/// `rho2` and `upsilon` are stored in row-major order of the pairs
/// `(i, j)` with `i < j`; see [`upper_pairs`].
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaShrinkState {
    pub n: usize,
    pub rho2: Vec<f64>,
    pub psi2: f64,
    pub upsilon: Vec<f64>,
    pub zeta: f64,
}

/// Pairs `(i, j)`, `i < j`, in row-major order.
pub fn upper_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect()
}

fn pair_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    // rows before i contribute (n-1) + (n-2) + ... + (n-i) pairs
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

impl OmegaShrinkState {
    /// `υ_ij, ζ ~ IG(½, 1)`, then `ρ_ij² ~ IG(½, 1/υ_ij)` and `ψ² ~ IG(½, 1/ζ)`.
    pub fn from_prior<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        let m = n * n.saturating_sub(1) / 2;
        let upsilon = (0..m).map(|_| draw_inv_gamma(0.5, 1.0, rng)).collect::<Result<Vec<_>>>()?;
        let zeta = draw_inv_gamma(0.5, 1.0, rng)?;
        let rho2 = upsilon.iter().map(|v| draw_inv_gamma(0.5, 1.0 / v, rng)).collect::<Result<Vec<_>>>()?;
        let psi2 = draw_inv_gamma(0.5, 1.0 / zeta, rng)?;
        Ok(OmegaShrinkState {
            n,
            rho2,
            psi2,
            upsilon,
            zeta,
        })
    }

    /// `ρ²` for the unordered pair `{i, j}`, `i ≠ j`.
    pub fn rho2_at(&self, i: usize, j: usize) -> f64 {
        self.rho2[pair_index(self.n, i, j)]
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.n * self.n.saturating_sub(1) / 2;
        for len in [self.rho2.len(), self.upsilon.len()] {
            if len != m {
                return Err(Error::DimensionMismatch { expected: m, got: len });
            }
        }
        check_positive("rho2", self.rho2.iter().copied())?;
        check_positive("upsilon", self.upsilon.iter().copied())?;
        check_positive("psi2", [self.psi2])?;
        check_positive("zeta", [self.zeta])
    }

    /// Diagonal prior precision of `ω₂₁` when `pivot` leads the partition:
    /// `1/(ψ² ρ²_{pivot,k})` for the other indices `k` in ascending order.
    pub fn pivot_precision(&self, pivot: usize) -> DVector<f64> {
        let others = (0..self.n).filter(|&k| k != pivot);
        DVector::from_iterator(self.n - 1, others.map(|k| 1.0 / (self.psi2 * self.rho2_at(pivot, k))))
    }
}

fn check_positive(name: &'static str, values: impl IntoIterator<Item = f64>) -> Result<()> {
    for value in values {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::NonPositiveParameter { name, value });
        }
    }
    Ok(())
}

/// One pass over `λ²`, `τ²`, `ν`, `ξ`, each from its inverse-gamma conditional
/// given the current δ. The `τ²` shape is `(J+1)/2` with `J = len(δ)`.
pub fn update_delta_shrink<R: Rng + ?Sized>(
    delta: &DVector<f64>,
    state: &DeltaShrinkState,
    rng: &mut R,
) -> Result<DeltaShrinkState> {
    state.validate()?;
    if delta.len() != state.len() {
        return Err(Error::DimensionMismatch {
            expected: state.len(),
            got: delta.len(),
        });
    }
    let j = delta.len();
    let tau2 = state.tau2;
    let mut lambda2 = DVector::zeros(j);
    for k in 0..j {
        lambda2[k] = draw_inv_gamma(1.0, 1.0 / state.nu[k] + delta[k] * delta[k] / (2.0 * tau2), rng)?;
    }
    let ss: f64 = delta.iter().zip(lambda2.iter()).map(|(d, l)| d * d / l).sum();
    let tau2 = draw_inv_gamma((j as f64 + 1.0) / 2.0, 1.0 / state.xi + 0.5 * ss, rng)?;
    let mut nu = DVector::zeros(j);
    for k in 0..j {
        nu[k] = draw_inv_gamma(1.0, 1.0 + 1.0 / lambda2[k], rng)?;
    }
    let xi = draw_inv_gamma(1.0, 1.0 + 1.0 / tau2, rng)?;
    Ok(DeltaShrinkState { lambda2, tau2, nu, xi })
}

/// Prior `δ ~ N(0, A⁻¹)` with `A = diag(1/(τ² λ_j²))`.
pub fn build_horseshoe_prior_precision(state: &DeltaShrinkState) -> Result<(SpdMatrix, DVector<f64>)> {
    let diag = state.lambda2.map(|l| 1.0 / (state.tau2 * l));
    Ok((SpdMatrix::from_diagonal(&diag)?, DVector::zeros(state.len())))
}

/// `η ~ Ga(a_η + T/2, b_η + s₁₁/2)`.
pub fn update_eta<R: Rng + ?Sized>(s11: f64, t: usize, a_eta: f64, b_eta: f64, rng: &mut R) -> Result<f64> {
    draw_gamma(a_eta + t as f64 / 2.0, b_eta + s11 / 2.0, rng)
}

/// Restriction of the `ω₂₁` conditional to the line `ω₂₁ + κα`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineConditional {
    pub mean: f64,
    pub variance: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Mean and variance of κ and the feasible interval `{κ : q(ω₂₁ + κα) < ω₁₁}`,
/// where `q(x) = xᵀΩ₂₂⁻¹x`.
pub fn line_conditional(
    omega21: &DVector<f64>,
    omega11: f64,
    omega22_inv: &DMatrix<f64>,
    s21: &DVector<f64>,
    s11: f64,
    a_omega: &DVector<f64>,
    alpha: &DVector<f64>,
) -> Result<LineConditional> {
    let p_alpha = omega22_inv * alpha;
    let quad = omega21.dot(&(omega22_inv * omega21));
    let c = quad - omega11;
    if !(c < 0.0) {
        return Err(Error::InfeasibleStart { quad, omega11 });
    }
    let a = alpha.dot(&p_alpha);
    let b = omega21.dot(&p_alpha);
    let root = (b * b - a * c).sqrt();
    let a_hat_alpha = a_omega.component_mul(alpha) + &p_alpha * s11;
    let denom = alpha.dot(&a_hat_alpha);
    Ok(LineConditional {
        mean: -(s21.dot(alpha) + omega21.dot(&a_hat_alpha)) / denom,
        variance: 1.0 / denom,
        lo: (-b - root) / a,
        hi: (-b + root) / a,
    })
}

/// Redraws of κ allowed when rounding puts a draw on the boundary.
const MAX_HIT_AND_RUN_TRIES: usize = 100;

/// One Hit-and-Run move for `ω₂₁` targeting `N(−Â⁻¹s₂₁, Â⁻¹)` restricted to
/// `ω₂₁ᵀΩ₂₂⁻¹ω₂₁ < ω₁₁`, with `Â = diag(a_omega) + s₁₁Ω₂₂⁻¹`.
///
/// `omega22_inv` must be symmetric positive definite.
pub fn hit_and_run_omega21<R: Rng + ?Sized>(
    omega21: &DVector<f64>,
    omega11: f64,
    omega22_inv: &DMatrix<f64>,
    s21: &DVector<f64>,
    s11: f64,
    a_omega: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let m = omega21.len();
    for (len, expected) in [(omega22_inv.nrows(), m), (s21.len(), m), (a_omega.len(), m)] {
        if len != expected {
            return Err(Error::DimensionMismatch { expected, got: len });
        }
    }
    if m == 0 {
        return Ok(omega21.clone());
    }
    for _ in 0..MAX_HIT_AND_RUN_TRIES {
        let u = std_normal_vec(m, rng);
        let norm = u.norm();
        if !(norm > 0.0) {
            continue;
        }
        let alpha = u / norm;
        let line = line_conditional(omega21, omega11, omega22_inv, s21, s11, a_omega, &alpha)?;
        let kappa = draw_trunc_normal(line.mean, line.variance, line.lo, line.hi, rng)?;
        let next = omega21 + alpha * kappa;
        if next.dot(&(omega22_inv * &next)) < omega11 {
            return Ok(next);
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_HIT_AND_RUN_TRIES,
    })
}

/// One block-Gibbs pass over every row/column of Ω.
///
/// For pivot `j`: `η ~ Ga(a_η + T/2, b_η + s₁₁/2)`, `ω₁₁ ← η + ω₂₁ᵀΩ₂₂⁻¹ω₂₁`
/// with the current `ω₂₁`, then one Hit-and-Run move for `ω₂₁` at that `ω₁₁`.
pub fn ghs_block_sweep<R: Rng + ?Sized>(
    omega: &SpdMatrix,
    s: &DMatrix<f64>,
    shrink: &OmegaShrinkState,
    t: usize,
    prior: &PriorConfig,
    rng: &mut R,
) -> Result<SpdMatrix> {
    let n = omega.dim();
    if shrink.n != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: shrink.n,
        });
    }
    let mut work = omega.matrix().clone();
    for j in 0..n {
        let part = partition_at(&work, s, j)?;
        let inv22 = if n > 1 {
            SpdMatrix::new(part.rest.clone())?.inverse()
        } else {
            DMatrix::zeros(0, 0)
        };
        let quad = part.off_col.dot(&(&inv22 * &part.off_col));
        let eta = update_eta(part.s_scalar, t, prior.a_eta, prior.b_eta, rng)?;
        let omega11 = eta + quad;
        let a_omega = shrink.pivot_precision(j);
        let col = hit_and_run_omega21(&part.off_col, omega11, &inv22, &part.s_col, part.s_scalar, &a_omega, rng)?;
        work[(j, j)] = omega11;
        for (a, k) in part.others().into_iter().enumerate() {
            work[(j, k)] = col[a];
            work[(k, j)] = col[a];
        }
    }
    SpdMatrix::new(work)
}

/// One pass over `ρ²`, `ψ²`, `υ`, `ζ` given the off-diagonal entries of Ω.
pub fn update_omega_shrink<R: Rng + ?Sized>(
    omega: &DMatrix<f64>,
    state: &OmegaShrinkState,
    rng: &mut R,
) -> Result<OmegaShrinkState> {
    state.validate()?;
    let n = state.n;
    if omega.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: omega.nrows(),
        });
    }
    let pairs = upper_pairs(n);
    let psi2 = state.psi2;
    let rho2 = pairs
        .iter()
        .zip(&state.upsilon)
        .map(|(&(i, j), u)| {
            let w = omega[(i, j)];
            draw_inv_gamma(1.0, 1.0 / u + w * w / (2.0 * psi2), rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let ss: f64 = pairs
        .iter()
        .zip(&rho2)
        .map(|(&(i, j), r)| omega[(i, j)] * omega[(i, j)] / r)
        .sum();
    let shape = (n * n.saturating_sub(1)) as f64 / 4.0 + 0.5;
    let psi2 = draw_inv_gamma(shape, 1.0 / state.zeta + 0.5 * ss, rng)?;
    let upsilon = rho2
        .iter()
        .map(|r| draw_inv_gamma(1.0, 1.0 + 1.0 / r, rng))
        .collect::<Result<Vec<_>>>()?;
    let zeta = draw_inv_gamma(1.0, 1.0 + 1.0 / psi2, rng)?;
    Ok(OmegaShrinkState {
        n,
        rho2,
        psi2,
        upsilon,
        zeta,
    })
}
