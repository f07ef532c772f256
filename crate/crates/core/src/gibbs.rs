//! Full conditionals and the chain driver.
//!
//! A sweep updates, in order: every latent row `Z_t`, then μ, then the
//! skewness block, then Ω, then the shrinkage hyperparameters (LT-HSGHS only)
//! and finally the skew-t mixing weights and degrees of freedom.
//!
//! Every conditional takes the optional skew-t weights γ into account. When
//! γ is absent the weight of each observation is exactly `1.0`, so the
//! skew-normal path runs the very same arithmetic.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::distributions::{
    draw_mvn_canonical, draw_trunc_normal, draw_wishart_inverse_scale, RngStream,
};
use crate::error::{Error, Result};
use crate::horseshoe::{self, DeltaShrinkState, OmegaShrinkState};
use crate::model::{residuals, Dataset, DeltaLayout, LatentState, ModelParams, PriorConfig, Tail, Variant};
use crate::numerics::SpdMatrix;
use crate::skewt;

/// Burn-in, retained iterations and thinning of one chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainConfig {
    pub burn_in: usize,
    /// Post-burn-in iterations; every `thin`-th of them is stored.
    pub draws: usize,
    pub thin: usize,
    pub store_latent: bool,
}

impl ChainConfig {
    pub fn new(burn_in: usize, draws: usize, thin: usize) -> Self {
        ChainConfig {
            burn_in,
            draws,
            thin,
            store_latent: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::Schema {
                path: "chain.thin".into(),
                message: "must be at least 1".into(),
            });
        }
        if self.draws == 0 {
            return Err(Error::Schema {
                path: "chain.draws".into(),
                message: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    /// Number of draws `run_chain` keeps: `ceil(draws / thin)`.
    pub fn stored(&self) -> usize {
        self.draws.div_ceil(self.thin)
    }

    pub fn total_iterations(&self) -> usize {
        self.burn_in + self.draws
    }
}

/// Complete state of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub params: ModelParams,
    pub latent: LatentState,
    pub delta_shrink: Option<DeltaShrinkState>,
    pub omega_shrink: Option<OmegaShrinkState>,
    pub varphi: Option<f64>,
}

/// Starting value of the degrees of freedom for skew-t chains.
pub const INITIAL_VARPHI: f64 = 10.0;

impl ChainState {
    /// `μ = 0`, `Δ = 0`, `Ω = I`, `Z = |N(0, 1)|`; horseshoe scales from prior
    /// draws; for skew-t, `γ = 1` and `φ = 10`.
    pub fn initialize<R: Rng + ?Sized>(data: &Dataset, prior: &PriorConfig, rng: &mut R) -> Result<Self> {
        let (t_len, n) = (data.t(), data.n());
        if prior.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: prior.n(),
            });
        }
        let z = DMatrix::from_fn(t_len, n, |_, _| crate::distributions::std_normal(rng).abs());
        let (delta_shrink, omega_shrink) = if prior.variant == Variant::LtHsghs {
            (
                Some(DeltaShrinkState::from_prior(prior.layout().len(), rng)?),
                Some(OmegaShrinkState::from_prior(n, rng)?),
            )
        } else {
            (None, None)
        };
        let (gamma, varphi) = match prior.tail {
            Tail::SkewNormal => (None, None),
            Tail::SkewT => (Some(DVector::from_element(t_len, 1.0)), Some(INITIAL_VARPHI)),
        };
        Ok(ChainState {
            params: ModelParams::initial(n),
            latent: LatentState { z, gamma },
            delta_shrink,
            omega_shrink,
            varphi,
        })
    }

    /// Checks `Z ≥ 0`, Ω positive definite and, for LT layouts, a zero strict
    /// upper triangle of Δ.
    pub fn check_invariants(&self, layout: DeltaLayout) -> Result<()> {
        if self.latent.z.iter().any(|z| !(*z >= 0.0)) {
            return Err(Error::InvalidData("negative latent value".into()));
        }
        SpdMatrix::new(self.params.omega.matrix().clone())?;
        if let DeltaLayout::Lower(n) = layout {
            for i in 0..n {
                for j in (i + 1)..n {
                    if self.params.delta[(i, j)] != 0.0 {
                        return Err(Error::InvalidData(format!("Δ[{i}][{j}] nonzero under LT layout")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Switches for each block of the sweep. Disabled blocks keep their value
/// and consume no randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepControl {
    pub latent: bool,
    pub mu: bool,
    pub delta: bool,
    pub omega: bool,
    pub shrinkage: bool,
    pub tail: bool,
}

impl Default for SweepControl {
    fn default() -> Self {
        SweepControl {
            latent: true,
            mu: true,
            delta: true,
            omega: true,
            shrinkage: true,
            tail: true,
        }
    }
}

impl SweepControl {
    pub fn none() -> Self {
        SweepControl {
            latent: false,
            mu: false,
            delta: false,
            omega: false,
            shrinkage: false,
            tail: false,
        }
    }
}

/// Draws μ from `N(Â⁻¹b̂, Â⁻¹)` with `Â = A_μ + Σγ_t Ω` and
/// `b̂ = A_μ b_μ + Ω Σ γ_t (R_t − Δ Z_t)`.
pub fn update_mu<R: Rng + ?Sized>(
    params: &ModelParams,
    latent: &LatentState,
    data: &Dataset,
    prior: &PriorConfig,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let (precision, rhs) = mu_posterior(params, latent, data, prior)?;
    draw_mvn_canonical(&precision, &rhs, rng)
}

/// Precision and linear term of the μ conditional.
pub fn mu_posterior(
    params: &ModelParams,
    latent: &LatentState,
    data: &Dataset,
    prior: &PriorConfig,
) -> Result<(SpdMatrix, DVector<f64>)> {
    let n = data.n();
    let centered = data.matrix() - &latent.z * params.delta.transpose();
    let mut weight_sum = 0.0;
    let mut acc = DVector::zeros(n);
    for t in 0..data.t() {
        let w = latent.weight(t);
        weight_sum += w;
        acc += centered.row(t).transpose() * w;
    }
    let omega = params.omega.matrix();
    let precision = SpdMatrix::new(prior.a_mu.matrix() + omega * weight_sum)?;
    let rhs = prior.a_mu.matrix() * &prior.b_mu + omega * acc;
    Ok((precision, rhs))
}

/// Data part of the δ conditional: `Σ γ_t W_tᵀ Ω W_t` and `Σ γ_t W_tᵀ Ω R̃_t`.
///
/// Both are assembled from `G = Σ γ_t Z_t Z_tᵀ` and `C = Ω Σ γ_t R̃_t Z_tᵀ`:
/// the entry for δ positions `(i, j)`, `(k, l)` is `Ω_ik G_jl`, and the
/// linear term at `(i, j)` is `C_ij`.
pub fn delta_data_terms(
    params: &ModelParams,
    latent: &LatentState,
    data: &Dataset,
    layout: DeltaLayout,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = data.n();
    let mut zw = latent.z.clone();
    let mut rw = data.matrix().clone();
    for t in 0..data.t() {
        let w = latent.weight(t);
        for j in 0..n {
            zw[(t, j)] *= w;
            rw[(t, j)] -= params.mu[j];
        }
    }
    let gram = zw.transpose() * &latent.z;
    let omega = params.omega.matrix();
    let cross = omega * rw.transpose() * &zw;
    let positions = layout.positions();
    let m = positions.len();
    let precision = DMatrix::from_fn(m, m, |p, q| {
        let (i, j) = positions[p];
        let (k, l) = positions[q];
        omega[(i, k)] * gram[(j, l)]
    });
    let rhs = DVector::from_iterator(m, positions.iter().map(|&(i, j)| cross[(i, j)]));
    (precision, rhs)
}

/// Draws δ from `N(Â⁻¹b̂, Â⁻¹)` with `Â = A + Σγ_t W_tᵀΩW_t` and
/// `b̂ = A b + Σγ_t W_tᵀΩR̃_t`, returning `(δ, Δ)`.
///
/// `prior_precision` and `prior_mean` are `A` and `b`; the horseshoe variant
/// passes its own diagonal precision here.
pub fn update_delta_block<R: Rng + ?Sized>(
    params: &ModelParams,
    latent: &LatentState,
    data: &Dataset,
    layout: DeltaLayout,
    prior_precision: &SpdMatrix,
    prior_mean: &DVector<f64>,
    rng: &mut R,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if prior_precision.dim() != layout.len() || prior_mean.len() != layout.len() {
        return Err(Error::DimensionMismatch {
            expected: layout.len(),
            got: prior_precision.dim(),
        });
    }
    let (data_precision, data_rhs) = delta_data_terms(params, latent, data, layout);
    let precision = SpdMatrix::new(prior_precision.matrix() + data_precision)?;
    let rhs = prior_precision.matrix() * prior_mean + data_rhs;
    let delta = draw_mvn_canonical(&precision, &rhs, rng)?;
    let matrix = layout.to_matrix(&delta)?;
    Ok((delta, matrix))
}

/// Unrestricted Δ (all `N²` entries) under the normal prior.
pub fn update_delta_full<R: Rng + ?Sized>(
    params: &ModelParams,
    latent: &LatentState,
    data: &Dataset,
    prior: &PriorConfig,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let layout = DeltaLayout::Full(data.n());
    update_delta_block(params, latent, data, layout, &prior.a_delta, &prior.b_delta, rng).map(|(_, m)| m)
}

/// Lower-triangular Δ. `injected` overrides the prior `(A_δ, b_δ)`.
pub fn update_delta_lt<R: Rng + ?Sized>(
    params: &ModelParams,
    latent: &LatentState,
    data: &Dataset,
    prior: &PriorConfig,
    injected: Option<(&SpdMatrix, &DVector<f64>)>,
    rng: &mut R,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let layout = DeltaLayout::Lower(data.n());
    let (a, b) = injected.unwrap_or((&prior.a_delta, &prior.b_delta));
    update_delta_block(params, latent, data, layout, a, b, rng)
}

/// `S = Σ γ_t e_t e_tᵀ` with `e_t = R_t − μ − Δ Z_t`.
pub fn residual_scatter(params: &ModelParams, latent: &LatentState, data: &Dataset) -> DMatrix<f64> {
    let e = residuals(params, &latent.z, data);
    let mut ew = e.clone();
    for t in 0..data.t() {
        let w = latent.weight(t);
        ew.row_mut(t).scale_mut(w);
    }
    let mut s = ew.transpose() * e;
    crate::numerics::symmetrize(&mut s);
    s
}

/// Draws Ω from `W(Ŝ⁻¹, ν_Ω + T)` with `Ŝ = S_Ω + S`.
pub fn update_omega_wishart<R: Rng + ?Sized>(
    params: &ModelParams,
    latent: &LatentState,
    data: &Dataset,
    prior: &PriorConfig,
    rng: &mut R,
) -> Result<SpdMatrix> {
    let s_hat = SpdMatrix::new(prior.s_omega.matrix() + residual_scatter(params, latent, data))?;
    draw_wishart_inverse_scale(&s_hat, prior.nu_omega + data.t() as f64, rng)
}

/// Quantities of the `Z_t` conditional shared by all rows:
/// `Â_z = I + ΔᵀΩΔ` and `M = Â_z⁻¹ΔᵀΩ`, so that `μ_z = M (R_t − μ)`.
#[derive(Debug, Clone)]
pub struct LatentConditional {
    a: DMatrix<f64>,
    gain: DMatrix<f64>,
    mu: DVector<f64>,
}

impl LatentConditional {
    pub fn new(params: &ModelParams) -> Result<Self> {
        let n = params.n();
        let dt_omega = params.delta.transpose() * params.omega.matrix();
        let a = SpdMatrix::new(DMatrix::identity(n, n) + &dt_omega * &params.delta)?;
        let gain = a.solve_matrix(&dt_omega);
        Ok(LatentConditional {
            a: a.into_matrix(),
            gain,
            mu: params.mu.clone(),
        })
    }

    /// Unscaled precision `I + ΔᵀΩΔ`.
    pub fn precision(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn mean(&self, r_t: &DVector<f64>) -> DVector<f64> {
        &self.gain * (r_t - &self.mu)
    }

    /// One element-wise scan over the coordinates of `z_t`, in index order.
    ///
    /// Coordinate `k` is drawn from `N⁺(μ_k − a_kk⁻¹ Σ_{l≠k} a_kl (z_l − μ_l), 1/(γ a_kk))`.
    pub fn update_row<R: Rng + ?Sized>(
        &self,
        r_t: &DVector<f64>,
        weight: f64,
        z_t: &mut DVector<f64>,
        rng: &mut R,
    ) -> Result<()> {
        let mean = self.mean(r_t);
        let n = z_t.len();
        for k in 0..n {
            let akk = self.a[(k, k)];
            let mut shift = 0.0;
            for l in 0..n {
                if l != k {
                    shift += self.a[(k, l)] * (z_t[l] - mean[l]);
                }
            }
            let m = mean[k] - shift / akk;
            z_t[k] = draw_trunc_normal(m, 1.0 / (weight * akk), 0.0, f64::INFINITY, rng)?;
        }
        Ok(())
    }
}

/// Single-row element-wise update of `Z_t` (builds the shared conditional on the fly).
pub fn update_z_elementwise<R: Rng + ?Sized>(
    params: &ModelParams,
    data: &Dataset,
    t: usize,
    z_t: &mut DVector<f64>,
    weight: f64,
    rng: &mut R,
) -> Result<()> {
    LatentConditional::new(params)?.update_row(&data.row(t), weight, z_t, rng)
}

fn update_all_latent<R: Rng + ?Sized>(state: &mut ChainState, data: &Dataset, rng: &mut R) -> Result<()> {
    let cond = LatentConditional::new(&state.params)?;
    let mut z_t = DVector::zeros(data.n());
    for t in 0..data.t() {
        z_t.copy_from(&state.latent.z.row(t).transpose());
        cond.update_row(&data.row(t), state.latent.weight(t), &mut z_t, rng)?;
        state.latent.z.set_row(t, &z_t.transpose());
    }
    Ok(())
}

/// One full scan of the sampler for `prior.variant` and `prior.tail`.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &Dataset,
    prior: &PriorConfig,
    control: SweepControl,
    rng: &mut R,
) -> Result<()> {
    let layout = prior.layout();
    if control.latent {
        update_all_latent(state, data, rng)?;
    }
    if control.mu {
        state.params.mu = update_mu(&state.params, &state.latent, data, prior, rng)?;
    }
    if control.delta {
        let (_, matrix) = match (&state.delta_shrink, prior.variant) {
            (Some(shrink), Variant::LtHsghs) => {
                let (a, b) = horseshoe::build_horseshoe_prior_precision(shrink)?;
                update_delta_block(&state.params, &state.latent, data, layout, &a, &b, rng)?
            }
            _ => update_delta_block(
                &state.params,
                &state.latent,
                data,
                layout,
                &prior.a_delta,
                &prior.b_delta,
                rng,
            )?,
        };
        state.params.delta = matrix;
    }
    if control.omega {
        state.params.omega = match (&state.omega_shrink, prior.variant) {
            (Some(shrink), Variant::LtHsghs) => {
                let s = residual_scatter(&state.params, &state.latent, data);
                horseshoe::ghs_block_sweep(&state.params.omega, &s, shrink, data.t(), prior, rng)?
            }
            _ => update_omega_wishart(&state.params, &state.latent, data, prior, rng)?,
        };
    }
    if control.shrinkage {
        if let Some(shrink) = &state.delta_shrink {
            let delta = layout.to_vec(&state.params.delta)?;
            state.delta_shrink = Some(horseshoe::update_delta_shrink(&delta, shrink, rng)?);
        }
        if let Some(shrink) = &state.omega_shrink {
            state.omega_shrink = Some(horseshoe::update_omega_shrink(state.params.omega.matrix(), shrink, rng)?);
        }
    }
    if control.tail {
        if let (Some(varphi), Some(_)) = (state.varphi, &state.latent.gamma) {
            let gamma = skewt::update_gamma_all(&state.params, &state.latent.z, data, varphi, rng)?;
            let (next, _) = skewt::update_varphi_mh(varphi, &gamma, prior.a_varphi, prior.b_varphi, rng)?;
            state.latent.gamma = Some(gamma);
            state.varphi = Some(next);
        }
    }
    Ok(())
}

/// One retained draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub iteration: usize,
    pub mu: DVector<f64>,
    pub delta: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub varphi: Option<f64>,
    pub z: Option<DMatrix<f64>>,
}

impl Draw {
    /// Flattened scalars in [`scalar_names`] order.
    pub fn scalars(&self, layout: DeltaLayout) -> Vec<f64> {
        let n = self.mu.len();
        let mut out = Vec::with_capacity(n + layout.len() + n * n + 1);
        out.extend(self.mu.iter());
        out.extend(layout.positions().into_iter().map(|(i, j)| self.delta[(i, j)]));
        for i in 0..n {
            for j in 0..n {
                out.push(self.omega[(i, j)]);
            }
        }
        if let Some(v) = self.varphi {
            out.push(v);
        }
        out
    }
}

/// Column names `mu[i]`, `delta[i][j]`, `omega[i][j]`, `varphi` (1-based, row-major).
pub fn scalar_names(layout: DeltaLayout, with_varphi: bool) -> Vec<String> {
    let n = layout.n();
    let mut names: Vec<String> = (1..=n).map(|i| format!("mu[{i}]")).collect();
    names.extend(
        layout
            .positions()
            .into_iter()
            .map(|(i, j)| format!("delta[{}][{}]", i + 1, j + 1)),
    );
    for i in 1..=n {
        for j in 1..=n {
            names.push(format!("omega[{i}][{j}]"));
        }
    }
    if with_varphi {
        names.push("varphi".into());
    }
    names
}

/// Posterior mean and central quantiles of one scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSummary {
    pub name: String,
    pub mean: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Posterior summaries plus the stored draws of one chain.
#[derive(Debug, Clone)]
pub struct ChainSummary {
    pub layout: DeltaLayout,
    pub mean_mu: DVector<f64>,
    pub mean_delta: DMatrix<f64>,
    pub mean_omega: DMatrix<f64>,
    pub mean_varphi: Option<f64>,
    pub scalars: Vec<ScalarSummary>,
    /// Number of retained draws the means are computed from.
    pub stored_draws: usize,
    pub iterations: usize,
    pub wall_seconds: f64,
    /// Metropolis–Hastings acceptance rate of the φ update (skew-t only).
    pub varphi_acceptance: Option<f64>,
    pub draws: Vec<Draw>,
}

impl ChainSummary {
    /// Summarizes a non-empty set of draws.
    pub fn from_draws(draws: Vec<Draw>, layout: DeltaLayout) -> Result<Self> {
        let first = draws
            .first()
            .ok_or_else(|| Error::InvalidData("no stored draws to summarize".into()))?;
        let n = layout.n();
        let k = draws.len() as f64;
        let mut mean_mu = DVector::zeros(n);
        let mut mean_delta = DMatrix::zeros(n, n);
        let mut mean_omega = DMatrix::zeros(n, n);
        let mut varphi_sum = first.varphi.map(|_| 0.0);
        for d in &draws {
            mean_mu += &d.mu;
            mean_delta += &d.delta;
            mean_omega += &d.omega;
            if let (Some(acc), Some(v)) = (varphi_sum.as_mut(), d.varphi) {
                *acc += v;
            }
        }
        mean_mu /= k;
        mean_delta /= k;
        mean_omega /= k;
        crate::numerics::symmetrize(&mut mean_omega);

        let names = scalar_names(layout, first.varphi.is_some());
        let columns: Vec<Vec<f64>> = {
            let rows: Vec<Vec<f64>> = draws.iter().map(|d| d.scalars(layout)).collect();
            (0..names.len()).map(|c| rows.iter().map(|r| r[c]).collect()).collect()
        };
        let scalars = names
            .into_iter()
            .zip(columns)
            .map(|(name, mut col)| {
                let mean = col.iter().sum::<f64>() / k;
                col.sort_by(|a, b| a.total_cmp(b));
                ScalarSummary {
                    name,
                    mean,
                    q025: quantile_sorted(&col, 0.025),
                    q50: quantile_sorted(&col, 0.5),
                    q975: quantile_sorted(&col, 0.975),
                }
            })
            .collect();
        Ok(ChainSummary {
            layout,
            mean_mu,
            mean_delta,
            mean_omega,
            mean_varphi: varphi_sum.map(|s| s / k),
            scalars,
            stored_draws: draws.len(),
            iterations: 0,
            wall_seconds: 0.0,
            varphi_acceptance: None,
            draws,
        })
    }
}

/// Runs a chain from the default initial state with every block enabled.
pub fn run_chain(
    data: &Dataset,
    prior: &PriorConfig,
    config: &ChainConfig,
    rng: &mut RngStream,
) -> Result<ChainSummary> {
    let state = ChainState::initialize(data, prior, rng)?;
    run_chain_from(state, data, prior, config, SweepControl::default(), rng)
}

/// Runs `burn_in + draws` sweeps from `state`, keeping every `thin`-th
/// post-burn-in state. Failures report the 0-based sweep index.
pub fn run_chain_from<R: Rng + ?Sized>(
    mut state: ChainState,
    data: &Dataset,
    prior: &PriorConfig,
    config: &ChainConfig,
    control: SweepControl,
    rng: &mut R,
) -> Result<ChainSummary> {
    config.validate()?;
    prior.validate()?;
    let layout = prior.layout();
    let start = Instant::now();
    let mut draws = Vec::with_capacity(config.stored());
    let mut accepted = 0usize;
    let mut tail_updates = 0usize;
    for sweep in 0..config.total_iterations() {
        let before = state.varphi;
        gibbs_sweep(&mut state, data, prior, control, rng).map_err(|e| Error::ChainAborted {
            sweep,
            source: Box::new(e),
        })?;
        if control.tail && before.is_some() {
            tail_updates += 1;
            if state.varphi != before {
                accepted += 1;
            }
        }
        if sweep < config.burn_in {
            continue;
        }
        let k = sweep - config.burn_in;
        if k % config.thin == 0 {
            draws.push(Draw {
                iteration: sweep + 1,
                mu: state.params.mu.clone(),
                delta: state.params.delta.clone(),
                omega: state.params.omega.matrix().clone(),
                varphi: state.varphi,
                z: config.store_latent.then(|| state.latent.z.clone()),
            });
        }
    }
    let mut summary = ChainSummary::from_draws(draws, layout)?;
    summary.iterations = config.total_iterations();
    summary.wall_seconds = start.elapsed().as_secs_f64();
    summary.varphi_acceptance = (tail_updates > 0).then(|| accepted as f64 / tail_updates as f64);
    Ok(summary)
}
