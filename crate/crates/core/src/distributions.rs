//! Random variate generators for the full conditionals.
//!
//! Every chain owns one [`RngStream`]. Streams are ChaCha8 keyed by a 64-bit
//! seed with a 64-bit stream selector, so `(seed, stream_id)` pins the whole
//! draw sequence and distinct stream ids never overlap. The study harness
//! assigns `stream_id = replication_index * 16 + variant_index`, with index
//! [`DATA_STREAM_SLOT`] reserved for the shared data generator.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::numerics::SpdMatrix;

/// Slot within a replication's block of 16 stream ids used for data generation.
pub const DATA_STREAM_SLOT: u64 = 15;

/// Stream id for `(replication, slot)`.
pub fn stream_id(replication: usize, slot: u64) -> u64 {
    debug_assert!(slot < 16);
    replication as u64 * 16 + slot
}

/// Reproducible, independently seekable random stream owned by one chain.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Vector of i.i.d. standard normals.
pub fn std_normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| std_normal(rng))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - Φ(x)`, accurate for large positive `x`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse of [`normal_sf`].
fn normal_isf(p: f64) -> f64 {
    std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

fn normal_quantile(p: f64) -> f64 {
    -normal_isf(p)
}

/// Draws `N(mean, precision⁻¹)` through `x = mean + L⁻ᵀ u`.
pub fn draw_mvn_from_precision<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    precision: &SpdMatrix,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if mean.len() != precision.dim() {
        return Err(Error::DimensionMismatch {
            expected: precision.dim(),
            got: mean.len(),
        });
    }
    let u = std_normal_vec(mean.len(), rng);
    Ok(mean + precision.solve_upper(&u))
}

/// Draws `N(P⁻¹ b, P⁻¹)` with a single factorization of the precision `P`.
pub fn draw_mvn_canonical<R: Rng + ?Sized>(
    precision: &SpdMatrix,
    b: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if b.len() != precision.dim() {
        return Err(Error::DimensionMismatch {
            expected: precision.dim(),
            got: b.len(),
        });
    }
    let u = std_normal_vec(b.len(), rng);
    Ok(precision.solve_upper(&(precision.solve_lower(b) + u)))
}

/// Standardized lower bound beyond which tail rejection replaces inversion.
const TAIL_SWITCH: f64 = 6.0;

/// `N(mu, sigma2)` restricted to `[lo, hi]`; either bound may be infinite.
pub fn draw_trunc_normal<R: Rng + ?Sized>(
    mu: f64,
    sigma2: f64,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::NonPositiveParameter {
            name: "sigma2",
            value: sigma2,
        });
    }
    if !(lo < hi) {
        return Err(Error::EmptyInterval { lo, hi });
    }
    let sigma = sigma2.sqrt();
    let z = std_trunc_normal((lo - mu) / sigma, (hi - mu) / sigma, rng);
    Ok((mu + sigma * z).clamp(lo, hi))
}

fn std_trunc_normal<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a >= 0.0 {
        right_trunc(a, b, rng)
    } else if b <= 0.0 {
        -right_trunc(-b, -a, rng)
    } else {
        let (pa, pb) = (normal_cdf(a), normal_cdf(b));
        let u: f64 = rng.random();
        normal_quantile(pa + u * (pb - pa)).clamp(a, b)
    }
}

/// Standard normal on `[a, b]` with `0 <= a < b`.
fn right_trunc<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a < TAIL_SWITCH {
        let (qa, qb) = (normal_sf(a), normal_sf(b));
        let u: f64 = rng.random();
        return normal_isf(qa - u * (qa - qb)).clamp(a, b);
    }
    if b - a < 1.0 / a {
        // Narrow window far in the tail: uniform proposal, acceptance ≥ e^{-1.01}.
        loop {
            let z = a + (b - a) * rng.random::<f64>();
            let u: f64 = rng.random();
            if u.ln() <= -0.5 * (z - a) * (z + a) {
                return z;
            }
        }
    }
    // Robert (1995) translated-exponential proposal with the optimal rate.
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = -(1.0 - rng.random::<f64>()).ln();
        let z = a + e / lambda;
        if z > b {
            continue;
        }
        let u: f64 = rng.random();
        if u.ln() <= -0.5 * (z - lambda) * (z - lambda) {
            return z;
        }
    }
}

/// Gamma with shape/rate parameterization.
pub fn draw_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0) || !shape.is_finite() {
        return Err(Error::NonPositiveParameter {
            name: "shape",
            value: shape,
        });
    }
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::NonPositiveParameter {
            name: "rate",
            value: rate,
        });
    }
    let g = Gamma::new(shape, 1.0 / rate).map_err(|_| Error::NonPositiveParameter {
        name: "rate",
        value: rate,
    })?;
    Ok(g.sample(rng))
}

/// Inverse gamma `IG(shape, scale)`, drawn as `1 / Ga(shape, rate = scale)`.
pub fn draw_inv_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    Ok(1.0 / draw_gamma(shape, scale, rng)?)
}

/// Wishart `W(scale, dof)` via the Bartlett decomposition.
pub fn draw_wishart<R: Rng + ?Sized>(scale: &SpdMatrix, dof: f64, rng: &mut R) -> Result<SpdMatrix> {
    let n = scale.dim();
    check_dof(dof, n)?;
    let fa = scale.factor() * bartlett_factor(n, dof, rng)?;
    SpdMatrix::new(&fa * fa.transpose())
}

/// Wishart `W(S⁻¹, dof)` given `S` rather than its inverse.
pub fn draw_wishart_inverse_scale<R: Rng + ?Sized>(
    inv_scale: &SpdMatrix,
    dof: f64,
    rng: &mut R,
) -> Result<SpdMatrix> {
    let n = inv_scale.dim();
    check_dof(dof, n)?;
    // S = L Lᵀ gives S⁻¹ = L⁻ᵀ L⁻¹, so L⁻ᵀ A is a valid square root factor.
    let mut fa = bartlett_factor(n, dof, rng)?;
    inv_scale.factor().tr_solve_lower_triangular_mut(&mut fa);
    SpdMatrix::new(&fa * fa.transpose())
}

fn check_dof(dof: f64, n: usize) -> Result<()> {
    if !(dof >= n as f64) || !dof.is_finite() {
        return Err(Error::DofTooSmall { dof, dim: n });
    }
    Ok(())
}

fn bartlett_factor<R: Rng + ?Sized>(n: usize, dof: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let chi2 = draw_gamma(0.5 * (dof - i as f64), 0.5, rng)?;
        a[(i, i)] = chi2.sqrt();
        for j in 0..i {
            a[(i, j)] = std_normal(rng);
        }
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{ks_critical_001, ks_statistic, simpson};
    use nalgebra::dmatrix;
    use statrs::function::gamma::{gamma_lr, gamma_ur};

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        let mut c = RngStream::new(7, 4);
        let xa: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
        assert_eq!(stream_id(2, 1), 33);
    }

    #[test]
    fn mvn_moments() {
        let mut rng = RngStream::new(1, 0);
        let n = 100_000;
        let p = SpdMatrix::identity(3);
        let zero = DVector::zeros(3);
        let mut mean = DVector::zeros(3);
        let mut second = DMatrix::zeros(3, 3);
        for _ in 0..n {
            let x = draw_mvn_from_precision(&zero, &p, &mut rng).unwrap();
            mean += &x;
            second += &x * x.transpose();
        }
        mean /= n as f64;
        let cov = second / n as f64 - &mean * mean.transpose();
        assert!(mean.amax() < 0.02);
        assert!((cov - DMatrix::identity(3, 3)).amax() < 0.05);
    }

    #[test]
    fn mvn_scalar_precision() {
        let mut rng = RngStream::new(2, 0);
        let p = SpdMatrix::new(dmatrix![4.0]).unwrap();
        let zero = DVector::zeros(1);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| draw_mvn_from_precision(&zero, &p, &mut rng).unwrap()[0])
            .collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!((v - 0.25).abs() < 0.005, "variance {v}");
    }

    #[test]
    fn mvn_canonical_matches_mean_form() {
        let p = SpdMatrix::new(dmatrix![3.0, 1.0; 1.0, 2.0]).unwrap();
        let b = DVector::from_vec(vec![1.0, -1.0]);
        let mean = p.solve(&b);
        let x1 = draw_mvn_canonical(&p, &b, &mut RngStream::new(5, 0)).unwrap();
        let x2 = draw_mvn_from_precision(&mean, &p, &mut RngStream::new(5, 0)).unwrap();
        assert!((x1 - x2).amax() < 1e-14);
    }

    #[test]
    fn mvn_is_deterministic() {
        let p = SpdMatrix::identity(4);
        let m = DVector::from_element(4, 1.0);
        let a = draw_mvn_from_precision(&m, &p, &mut RngStream::new(9, 9)).unwrap();
        let b = draw_mvn_from_precision(&m, &p, &mut RngStream::new(9, 9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn half_normal_mean() {
        let mut rng = RngStream::new(3, 0);
        let n = 100_000;
        let s: f64 = (0..n)
            .map(|_| draw_trunc_normal(0.0, 1.0, 0.0, f64::INFINITY, &mut rng).unwrap())
            .sum();
        let expected = (2.0 / std::f64::consts::PI).sqrt();
        assert!((s / n as f64 - expected).abs() < 0.01);
    }

    #[test]
    fn trunc_normal_far_interval_matches_quadrature() {
        let (mu, lo, hi) = (10.0, 0.0, 1.0);
        let dens = |x: f64| (-0.5 * (x - mu) * (x - mu)).exp();
        let mass = simpson(dens, lo, hi, 2000);
        let first = simpson(|x| x * dens(x), lo, hi, 2000);
        let oracle = first / mass;
        let mut rng = RngStream::new(4, 0);
        let n = 100_000;
        let s: f64 = (0..n)
            .map(|_| draw_trunc_normal(mu, 1.0, lo, hi, &mut rng).unwrap())
            .sum();
        assert!((s / n as f64 - oracle).abs() < 0.01, "{} vs {oracle}", s / n as f64);
    }

    #[test]
    fn trunc_normal_rejects_empty_interval() {
        let mut rng = RngStream::new(0, 0);
        assert!(matches!(
            draw_trunc_normal(0.0, 1.0, 1.0, 1.0, &mut rng),
            Err(Error::EmptyInterval { .. })
        ));
        assert!(matches!(
            draw_trunc_normal(0.0, 1.0, 2.0, -1.0, &mut rng),
            Err(Error::EmptyInterval { .. })
        ));
    }

    #[test]
    fn trunc_normal_support_fuzz() {
        let mut rng = RngStream::new(11, 0);
        let mut fuzz = RngStream::new(12, 0);
        for _ in 0..200_000 {
            let sigma: f64 = 10f64.powf(fuzz.random_range(-3.0..2.0));
            let mu: f64 = fuzz.random_range(-50.0..50.0);
            let off: f64 = fuzz.random_range(-40.0..40.0);
            let lo = mu + off * sigma;
            let width = sigma * 10f64.powf(fuzz.random_range(-4.0..2.0));
            let hi = if fuzz.random_bool(0.3) { f64::INFINITY } else { lo + width };
            let (lo, hi) = if fuzz.random_bool(0.5) { (lo, hi) } else { (-hi, -lo) };
            let x = draw_trunc_normal(mu, sigma * sigma, lo, hi, &mut rng).unwrap();
            assert!(x >= lo && x <= hi, "{x} outside [{lo}, {hi}]");
        }
    }

    fn trunc_cdf(a: f64, b: f64) -> impl Fn(f64) -> f64 {
        move |x: f64| {
            if a >= 0.0 {
                (normal_sf(a) - normal_sf(x.min(b))) / (normal_sf(a) - normal_sf(b))
            } else {
                (normal_cdf(x.min(b)) - normal_cdf(a)) / (normal_cdf(b) - normal_cdf(a))
            }
        }
    }

    #[test]
    fn trunc_normal_ks_across_regimes() {
        let n = 100_000;
        let crit = ks_critical_001(n);
        for (i, &(a, b)) in [
            (0.0, f64::INFINITY),
            (-1.0, 2.0),
            (-3.0, -0.5),
            (2.0, 3.0),
            (5.5, 9.0),
            (8.0, f64::INFINITY),
            (12.0, 12.05),
            (7.0, 7.5),
        ]
        .iter()
        .enumerate()
        {
            let mut rng = RngStream::new(100 + i as u64, 0);
            let xs: Vec<f64> = (0..n)
                .map(|_| draw_trunc_normal(0.0, 1.0, a, b, &mut rng).unwrap())
                .collect();
            let d = ks_statistic(xs, trunc_cdf(a, b));
            assert!(d < crit, "[{a}, {b}]: KS {d} >= {crit}");
        }
    }

    #[test]
    fn gamma_moments_and_ks() {
        let mut rng = RngStream::new(21, 0);
        let n = 1_000_000;
        let s: f64 = (0..n).map(|_| draw_gamma(2.0, 4.0, &mut rng).unwrap()).sum();
        assert!((s / n as f64 / 0.5 - 1.0).abs() < 0.01);

        let xs: Vec<f64> = (0..100_000).map(|_| draw_gamma(2.0, 4.0, &mut rng).unwrap()).collect();
        let d = ks_statistic(xs, |x| gamma_lr(2.0, 4.0 * x));
        assert!(d < ks_critical_001(100_000));
    }

    #[test]
    fn inv_gamma_moments_and_ks() {
        let mut rng = RngStream::new(22, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| draw_inv_gamma(3.0, 2.0, &mut rng).unwrap()).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((m - 1.0).abs() < 0.02);
        let d = ks_statistic(xs, |x| gamma_ur(3.0, 2.0 / x));
        assert!(d < ks_critical_001(100_000));
    }

    #[test]
    fn inv_gamma_is_pathwise_reciprocal() {
        let g = draw_gamma(1.5, 0.7, &mut RngStream::new(5, 5)).unwrap();
        let ig = draw_inv_gamma(1.5, 0.7, &mut RngStream::new(5, 5)).unwrap();
        assert_eq!(ig, 1.0 / g);
    }

    #[test]
    fn gamma_rejects_bad_parameters() {
        let mut rng = RngStream::new(0, 0);
        assert!(draw_gamma(0.0, 1.0, &mut rng).is_err());
        assert!(draw_gamma(1.0, 0.0, &mut rng).is_err());
        assert!(draw_inv_gamma(1.0, -1.0, &mut rng).is_err());
    }

    #[test]
    fn wishart_scalar_is_chi_square() {
        let mut rng = RngStream::new(31, 0);
        let one = SpdMatrix::identity(1);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| draw_wishart(&one, 5.0, &mut rng).unwrap().matrix()[(0, 0)])
            .collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((m / 5.0 - 1.0).abs() < 0.02);
        let d = ks_statistic(xs, |x| gamma_lr(2.5, 0.5 * x));
        assert!(d < ks_critical_001(100_000));
    }

    #[test]
    fn wishart_mean_identity() {
        let scale = SpdMatrix::new(dmatrix![2.0, 0.8; 0.8, 1.0]).unwrap();
        let dof = 5.0;
        let mut rng = RngStream::new(32, 0);
        let n = 10_000;
        let mut acc = DMatrix::zeros(2, 2);
        for _ in 0..n {
            acc += draw_wishart(&scale, dof, &mut rng).unwrap().matrix();
        }
        let mean = acc / n as f64;
        let target = scale.matrix() * dof;
        for i in 0..2 {
            for j in 0..2 {
                assert!((mean[(i, j)] / target[(i, j)] - 1.0).abs() < 0.03);
            }
        }
    }

    #[test]
    fn wishart_inverse_scale_mean() {
        let s = SpdMatrix::new(dmatrix![2.0, 0.5, 0.0; 0.5, 1.0, 0.2; 0.0, 0.2, 0.5]).unwrap();
        let target = s.inverse() * 7.0;
        let mut rng = RngStream::new(33, 0);
        let n = 20_000;
        let mut acc = DMatrix::zeros(3, 3);
        for _ in 0..n {
            acc += draw_wishart_inverse_scale(&s, 7.0, &mut rng).unwrap().matrix();
        }
        let mean = acc / n as f64;
        assert!((mean - &target).amax() / target.amax() < 0.03);
    }

    #[test]
    fn wishart_draws_are_pd_and_check_dof() {
        let mut rng = RngStream::new(34, 0);
        let scale = SpdMatrix::identity(4);
        for _ in 0..1000 {
            // SpdMatrix construction is itself the Cholesky check.
            draw_wishart(&scale, 4.0, &mut rng).unwrap();
        }
        assert!(matches!(
            draw_wishart(&scale, 3.5, &mut rng),
            Err(Error::DofTooSmall { .. })
        ));
    }
}
