//! Data, parameter and prior types, plus the vectorisation of the skewness matrix.
//!
//! Observations follow `R_t = μ + Δ Z_t + ε_t` with `Z_t ≥ 0` half-normal and
//! `ε_t ~ N(0, Ω⁻¹)`. Stacking the free entries of Δ into δ turns `Δ Z_t`
//! into `W_t δ`, which is what the normal update for the skewness block needs.
//! Under the lower-triangular layouts δ has `N(N+1)/2` entries ordered
//! `(δ11, δ21, δ22, δ31, …, δNN)`; the full layout uses all `N²` entries in
//! the same row-major order.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::SpdMatrix;

/// The three model variants compared by the simulation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// Unrestricted Δ, normal–Wishart prior.
    #[serde(rename = "full-nowi")]
    FullNowi,
    /// Lower-triangular Δ, normal–Wishart prior.
    #[serde(rename = "lt-nowi")]
    LtNowi,
    /// Lower-triangular Δ with horseshoe prior, graphical horseshoe on Ω.
    #[serde(rename = "lt-hsghs")]
    LtHsghs,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::FullNowi, Variant::LtNowi, Variant::LtHsghs];

    pub fn name(self) -> &'static str {
        match self {
            Variant::FullNowi => "full-nowi",
            Variant::LtNowi => "lt-nowi",
            Variant::LtHsghs => "lt-hsghs",
        }
    }

    /// Position used in RNG stream assignment.
    pub fn index(self) -> u64 {
        match self {
            Variant::FullNowi => 0,
            Variant::LtNowi => 1,
            Variant::LtHsghs => 2,
        }
    }

    pub fn is_lower_triangular(self) -> bool {
        !matches!(self, Variant::FullNowi)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tail {
    #[serde(rename = "skew-normal")]
    SkewNormal,
    #[serde(rename = "skew-t")]
    SkewT,
}

/// `T × N` observation matrix, one row per time point.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    r: DMatrix<f64>,
}

impl Dataset {
    /// `T = 0` is accepted (an empty sample leaves every conditional at its prior).
    pub fn new(r: DMatrix<f64>) -> Result<Self> {
        if r.ncols() == 0 {
            return Err(Error::InvalidData("dataset needs at least one column".into()));
        }
        if let Some((idx, _)) = r.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            let (row, col) = (idx % r.nrows(), idx / r.nrows());
            return Err(Error::InvalidData(format!(
                "non-finite value at row {}, column {}",
                row + 1,
                col + 1
            )));
        }
        Ok(Dataset { r })
    }

    pub fn empty(n: usize) -> Self {
        Dataset {
            r: DMatrix::zeros(0, n),
        }
    }

    pub fn t(&self) -> usize {
        self.r.nrows()
    }

    pub fn n(&self) -> usize {
        self.r.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn row(&self, t: usize) -> DVector<f64> {
        self.r.row(t).transpose()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub mu: DVector<f64>,
    pub delta: DMatrix<f64>,
    pub omega: SpdMatrix,
}

impl ModelParams {
    /// `μ = 0`, `Δ = 0`, `Ω = I`.
    pub fn initial(n: usize) -> Self {
        ModelParams {
            mu: DVector::zeros(n),
            delta: DMatrix::zeros(n, n),
            omega: SpdMatrix::identity(n),
        }
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }
}

/// Latent half-normal factors and, for skew-t, the gamma mixing weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    /// `T × N`, elementwise nonnegative.
    pub z: DMatrix<f64>,
    pub gamma: Option<DVector<f64>>,
}

impl LatentState {
    /// Weight of observation `t` (1 under the skew-normal model).
    #[inline]
    pub fn weight(&self, t: usize) -> f64 {
        self.gamma.as_ref().map_or(1.0, |g| g[t])
    }

    pub fn z_row(&self, t: usize) -> DVector<f64> {
        self.z.row(t).transpose()
    }
}

/// Prior hyperparameters together with the variant/tail they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorConfig {
    pub b_mu: DVector<f64>,
    pub a_mu: SpdMatrix,
    pub b_delta: DVector<f64>,
    pub a_delta: SpdMatrix,
    pub s_omega: SpdMatrix,
    pub nu_omega: f64,
    pub a_eta: f64,
    pub b_eta: f64,
    pub a_varphi: f64,
    pub b_varphi: f64,
    pub variant: Variant,
    pub tail: Tail,
}

impl PriorConfig {
    /// Simulation-study settings: `b = 0`, `A_μ = A_δ = 0.01 I`, `S_Ω = N I`,
    /// `ν_Ω = N`, `a_η = 1`, `b_η = 1`; for skew-t `a_φ = 2`, `b_φ = 0.1`.
    ///
    /// `b_η = 0` (a flat prior on η) leaves the posterior improper: once a row
    /// of Δ can reproduce its coordinate exactly through the latent variables,
    /// the likelihood stops decaying in that diagonal entry of Ω and the chain
    /// drifts off to infinity. `b_η = 1` puts the prior mean of the diagonal at
    /// 1, the same as the Wishart prior of the other variants.
    pub fn defaults(n: usize, variant: Variant, tail: Tail) -> Self {
        let j = DeltaLayout::for_variant(variant, n).len();
        PriorConfig {
            b_mu: DVector::zeros(n),
            a_mu: SpdMatrix::scaled_identity(n, 0.01),
            b_delta: DVector::zeros(j),
            a_delta: SpdMatrix::scaled_identity(j, 0.01),
            s_omega: SpdMatrix::scaled_identity(n, n as f64),
            nu_omega: n as f64,
            a_eta: 1.0,
            b_eta: 1.0,
            a_varphi: 2.0,
            b_varphi: 0.1,
            variant,
            tail,
        }
    }

    pub fn n(&self) -> usize {
        self.b_mu.len()
    }

    pub fn layout(&self) -> DeltaLayout {
        DeltaLayout::for_variant(self.variant, self.n())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let j = self.layout().len();
        let dims = [
            (self.a_mu.dim(), n),
            (self.s_omega.dim(), n),
            (self.b_delta.len(), j),
            (self.a_delta.dim(), j),
        ];
        for (got, expected) in dims {
            if got != expected {
                return Err(Error::DimensionMismatch { expected, got });
            }
        }
        if !(self.nu_omega >= n as f64) {
            return Err(Error::DofTooSmall {
                dof: self.nu_omega,
                dim: n,
            });
        }
        let nonneg = [("a_eta", self.a_eta), ("b_eta", self.b_eta)];
        for (name, value) in nonneg {
            if !(value >= 0.0) {
                return Err(Error::NonPositiveParameter { name, value });
            }
        }
        let pos = [("a_varphi", self.a_varphi), ("b_varphi", self.b_varphi)];
        for (name, value) in pos {
            if !(value > 0.0) {
                return Err(Error::NonPositiveParameter { name, value });
            }
        }
        Ok(())
    }
}

/// Index map between matrix positions of Δ and the stacked vector δ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaLayout {
    Full(usize),
    Lower(usize),
}

impl DeltaLayout {
    pub fn for_variant(variant: Variant, n: usize) -> Self {
        if variant.is_lower_triangular() {
            DeltaLayout::Lower(n)
        } else {
            DeltaLayout::Full(n)
        }
    }

    pub fn n(self) -> usize {
        match self {
            DeltaLayout::Full(n) | DeltaLayout::Lower(n) => n,
        }
    }

    /// Length of δ.
    pub fn len(self) -> usize {
        match self {
            DeltaLayout::Full(n) => n * n,
            DeltaLayout::Lower(n) => n * (n + 1) / 2,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }

    /// Number of free entries in row `i` of Δ.
    #[inline]
    pub fn row_len(self, i: usize) -> usize {
        match self {
            DeltaLayout::Full(n) => n,
            DeltaLayout::Lower(_) => i + 1,
        }
    }

    /// Offset of row `i`'s first entry inside δ.
    #[inline]
    pub fn row_start(self, i: usize) -> usize {
        match self {
            DeltaLayout::Full(n) => i * n,
            DeltaLayout::Lower(_) => i * (i + 1) / 2,
        }
    }

    /// `(row, col)` of every δ entry, in stacking order.
    pub fn positions(self) -> Vec<(usize, usize)> {
        let n = self.n();
        (0..n)
            .flat_map(|i| (0..self.row_len(i)).map(move |j| (i, j)))
            .collect()
    }

    pub fn index_of(self, i: usize, j: usize) -> Option<usize> {
        (i < self.n() && j < self.row_len(i)).then(|| self.row_start(i) + j)
    }

    pub fn to_matrix(self, delta: &DVector<f64>) -> Result<DMatrix<f64>> {
        if delta.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: delta.len(),
            });
        }
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for (k, (i, j)) in self.positions().into_iter().enumerate() {
            m[(i, j)] = delta[k];
        }
        Ok(m)
    }

    /// Reads the free entries of `m`; entries outside the layout are ignored.
    pub fn to_vec(self, m: &DMatrix<f64>) -> Result<DVector<f64>> {
        let n = self.n();
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: m.nrows(),
            });
        }
        Ok(DVector::from_iterator(
            self.len(),
            self.positions().into_iter().map(|(i, j)| m[(i, j)]),
        ))
    }
}

/// Design block `W_t` with `W_t δ = Δ Z_t`.
///
/// Row `i` holds `(z_1, …, z_{len_i})` in the columns of δ belonging to row
/// `i` of Δ, and zeros elsewhere.
pub fn build_w(z_t: &DVector<f64>, layout: DeltaLayout) -> Result<DMatrix<f64>> {
    let n = layout.n();
    if z_t.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: z_t.len(),
        });
    }
    let mut w = DMatrix::zeros(n, layout.len());
    for i in 0..n {
        let start = layout.row_start(i);
        for j in 0..layout.row_len(i) {
            w[(i, start + j)] = z_t[j];
        }
    }
    Ok(w)
}

/// `T × N` residual matrix `R − 1μᵀ − ZΔᵀ`.
pub fn residuals(params: &ModelParams, z: &DMatrix<f64>, data: &Dataset) -> DMatrix<f64> {
    let mut e = data.matrix() - z * params.delta.transpose();
    for mut row in e.row_iter_mut() {
        row -= params.mu.transpose();
    }
    e
}

fn check_dims(params: &ModelParams, latent: &LatentState, data: &Dataset) -> Result<()> {
    let n = data.n();
    if params.n() != n || params.omega.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: params.n(),
        });
    }
    if latent.z.nrows() != data.t() || latent.z.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: data.t(),
            got: latent.z.nrows(),
        });
    }
    Ok(())
}

/// `log p(R | μ, Δ, Ω, Z)` including the `(2π)^{-TN/2}` constant, summed over
/// observations. With mixing weights γ the error precision of row `t` is `γ_t Ω`.
pub fn loglik(params: &ModelParams, latent: &LatentState, data: &Dataset) -> Result<f64> {
    check_dims(params, latent, data)?;
    let (t_len, n) = (data.t(), data.n());
    let log_det = params.omega.log_det();
    let omega = params.omega.matrix();
    let mut total = 0.0;
    for t in 0..t_len {
        let e = data.row(t) - &params.mu - &params.delta * latent.z_row(t);
        let g = latent.weight(t);
        total += 0.5 * n as f64 * g.ln() - 0.5 * g * (e.transpose() * omega * &e)[(0, 0)];
    }
    Ok(total + 0.5 * t_len as f64 * log_det - 0.5 * (t_len * n) as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Same density through `tr{Ω (R̃ − ZΔᵀ)ᵀ Γ (R̃ − ZΔᵀ)}`.
pub fn loglik_trace_form(params: &ModelParams, latent: &LatentState, data: &Dataset) -> Result<f64> {
    check_dims(params, latent, data)?;
    let (t_len, n) = (data.t(), data.n());
    let mut e = residuals(params, &latent.z, data);
    let mut log_w = 0.0;
    for t in 0..t_len {
        let g = latent.weight(t);
        log_w += g.ln();
        e.row_mut(t).scale_mut(g.sqrt());
    }
    let s = e.transpose() * &e;
    let tr = crate::numerics::trace_of_product(params.omega.matrix(), &s);
    Ok(0.5 * n as f64 * log_w + 0.5 * t_len as f64 * params.omega.log_det()
        - 0.5 * tr
        - 0.5 * (t_len * n) as f64 * (2.0 * std::f64::consts::PI).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::RngStream;
    use nalgebra::dmatrix;
    use proptest::prelude::*;
    use rand::Rng;

    fn all_permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in all_permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    fn random_setup(n: usize, t: usize, seed: u64) -> (ModelParams, LatentState, Dataset) {
        let mut rng = RngStream::new(seed, 0);
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let omega = SpdMatrix::new(&b * b.transpose() + DMatrix::identity(n, n)).unwrap();
        let params = ModelParams {
            mu: DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
            delta: DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0)),
            omega,
        };
        let z = DMatrix::from_fn(t, n, |_, _| rng.random_range(0.0..2.0));
        let r = DMatrix::from_fn(t, n, |_, _| rng.random_range(-3.0..3.0));
        (params, LatentState { z, gamma: None }, Dataset::new(r).unwrap())
    }

    #[test]
    fn w_matches_hand_layout_for_n2() {
        let z = DVector::from_vec(vec![0.3, 1.7]);
        let w = build_w(&z, DeltaLayout::Lower(2)).unwrap();
        assert_eq!(w, dmatrix![0.3, 0.0, 0.0; 0.0, 0.3, 1.7]);
    }

    #[test]
    fn w_scalar_case() {
        let w = build_w(&DVector::from_vec(vec![3.0]), DeltaLayout::Lower(1)).unwrap();
        assert_eq!(w, dmatrix![3.0]);
        assert!(build_w(&DVector::zeros(2), DeltaLayout::Lower(3)).is_err());
    }

    #[test]
    fn w_times_delta_is_delta_times_z() {
        let mut rng = RngStream::new(4, 0);
        for n in 1..=6 {
            for layout in [DeltaLayout::Lower(n), DeltaLayout::Full(n)] {
                let dvec = DVector::from_fn(layout.len(), |_, _| rng.random_range(-3.0..3.0));
                let delta = layout.to_matrix(&dvec).unwrap();
                let z = DVector::from_fn(n, |_, _| rng.random_range(0.0..3.0));
                let w = build_w(&z, layout).unwrap();
                assert!((w * &dvec - &delta * &z).amax() <= 1e-12);
            }
        }
    }

    #[test]
    fn vec_to_matrix_definition() {
        let m = DeltaLayout::Lower(2)
            .to_matrix(&DVector::from_vec(vec![1.0, 2.0, 3.0]))
            .unwrap();
        assert_eq!(m, dmatrix![1.0, 0.0; 2.0, 3.0]);
        let zero = DeltaLayout::Lower(3).to_matrix(&DVector::zeros(6)).unwrap();
        assert_eq!(zero, DMatrix::zeros(3, 3));
        assert!(DeltaLayout::Lower(3).to_matrix(&DVector::zeros(5)).is_err());
        assert_eq!(DeltaLayout::Full(3).index_of(1, 2), Some(5));
        assert_eq!(DeltaLayout::Lower(3).index_of(1, 2), None);
        assert_eq!(DeltaLayout::Lower(3).index_of(2, 1), Some(4));
    }

    proptest! {
        #[test]
        fn layout_round_trip(n in 1usize..=7, full in any::<bool>(), seed in any::<u64>()) {
            let layout = if full { DeltaLayout::Full(n) } else { DeltaLayout::Lower(n) };
            let mut rng = RngStream::new(seed, 0);
            let v = DVector::from_fn(layout.len(), |_, _| rng.random_range(-10.0..10.0));
            let m = layout.to_matrix(&v).unwrap();
            prop_assert_eq!(layout.to_vec(&m).unwrap(), v);
            if !full {
                for i in 0..n {
                    for j in (i + 1)..n {
                        prop_assert_eq!(m[(i, j)], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn standard_normal_at_origin() {
        for n in 1..=4 {
            let params = ModelParams::initial(n);
            let latent = LatentState {
                z: DMatrix::from_element(1, n, 0.7),
                gamma: None,
            };
            let data = Dataset::new(DMatrix::zeros(1, n)).unwrap();
            let ll = loglik(&params, &latent, &data).unwrap();
            let expected = -(n as f64 / 2.0) * (2.0 * std::f64::consts::PI).ln();
            assert!((ll - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn trace_form_equals_sum_form() {
        for seed in 0..20 {
            let (params, mut latent, data) = random_setup(4, 30, seed);
            let a = loglik(&params, &latent, &data).unwrap();
            let b = loglik_trace_form(&params, &latent, &data).unwrap();
            assert!((a - b).abs() <= 1e-8 * a.abs());
            let mut rng = RngStream::new(seed, 1);
            latent.gamma = Some(DVector::from_fn(30, |_, _| rng.random_range(0.2..3.0)));
            let a = loglik(&params, &latent, &data).unwrap();
            let b = loglik_trace_form(&params, &latent, &data).unwrap();
            assert!((a - b).abs() <= 1e-8 * a.abs());
        }
    }

    #[test]
    fn loglik_invariant_under_column_permutation() {
        // Exhaustive over all N! simultaneous permutations of Δ's columns and Z's columns.
        for n in 1..=4 {
            let (params, latent, data) = random_setup(n, 12, 100 + n as u64);
            let base = loglik(&params, &latent, &data).unwrap();
            for perm in all_permutations(n) {
                let mut p2 = params.clone();
                p2.delta = DMatrix::from_fn(n, n, |i, j| params.delta[(i, perm[j])]);
                let z2 = DMatrix::from_fn(latent.z.nrows(), n, |t, j| latent.z[(t, perm[j])]);
                let l2 = LatentState { z: z2, gamma: None };
                let ll = loglik(&p2, &l2, &data).unwrap();
                assert!((ll - base).abs() <= 1e-10 * base.abs(), "perm {perm:?}");
            }
        }
    }

    #[test]
    fn lower_triangular_pattern_breaks_permutation_symmetry() {
        // A generic lower-triangular Δ has nonzero diagonal, so any nontrivial
        // column permutation moves a nonzero entry above the diagonal.
        for n in 2..=6 {
            let layout = DeltaLayout::Lower(n);
            let dvec = DVector::from_fn(layout.len(), |k, _| 1.0 + k as f64);
            let delta = layout.to_matrix(&dvec).unwrap();
            for perm in all_permutations(n) {
                if perm.iter().enumerate().all(|(i, &p)| i == p) {
                    continue;
                }
                let permuted = DMatrix::from_fn(n, n, |i, j| delta[(i, perm[j])]);
                let upper_nonzero = (0..n).any(|i| ((i + 1)..n).any(|j| permuted[(i, j)] != 0.0));
                assert!(upper_nonzero, "perm {perm:?} kept the LT pattern");
            }
        }
    }

    #[test]
    fn loglik_rejects_mismatched_dims() {
        let (params, latent, _) = random_setup(3, 5, 1);
        let data = Dataset::new(DMatrix::zeros(4, 3)).unwrap();
        assert!(loglik(&params, &latent, &data).is_err());
    }

    #[test]
    fn dataset_rejects_non_finite() {
        assert!(Dataset::new(dmatrix![1.0, f64::NAN]).is_err());
        assert_eq!(Dataset::empty(3).t(), 0);
    }

    #[test]
    fn default_prior_dimensions() {
        let p = PriorConfig::defaults(4, Variant::LtNowi, Tail::SkewNormal);
        assert_eq!(p.b_delta.len(), 10);
        assert_eq!(p.s_omega.matrix()[(0, 0)], 4.0);
        assert_eq!(p.nu_omega, 4.0);
        assert_eq!(p.a_mu.matrix()[(1, 1)], 0.01);
        p.validate().unwrap();
        let f = PriorConfig::defaults(4, Variant::FullNowi, Tail::SkewNormal);
        assert_eq!(f.b_delta.len(), 16);
        assert_eq!("lt-hsghs".parse::<Variant>().unwrap(), Variant::LtHsghs);
        assert!("lt".parse::<Variant>().is_err());
    }
}
