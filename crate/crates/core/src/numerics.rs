//! Dense symmetric linear algebra used by every conditional update.
//!
//! Matrices are small (N ≤ ~100, vectorised skewness blocks up to N²), so
//! everything here is plain dense column-major code on top of `nalgebra`
//! storage. The Cholesky factor is computed once when an [`SpdMatrix`] is
//! built and reused for solves, determinants and Gaussian draws.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric positive-definite matrix together with its lower Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    mat: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl SpdMatrix {
    /// Symmetrizes `(A + Aᵀ)/2` and factors. Fails if a pivot is not positive.
    pub fn new(mut mat: DMatrix<f64>) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::DimensionMismatch {
                expected: mat.nrows(),
                got: mat.ncols(),
            });
        }
        symmetrize(&mut mat);
        let chol = cholesky(&mat)?;
        Ok(SpdMatrix { mat, chol })
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    /// `scale · I`; `scale` must be positive.
    pub fn scaled_identity(n: usize, scale: f64) -> Self {
        assert!(scale > 0.0, "scaled_identity needs a positive scale");
        SpdMatrix {
            mat: DMatrix::from_diagonal_element(n, n, scale),
            chol: DMatrix::from_diagonal_element(n, n, scale.sqrt()),
        }
    }

    /// Diagonal matrix with the given strictly positive entries.
    pub fn from_diagonal(diag: &DVector<f64>) -> Result<Self> {
        if diag.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(SpdMatrix {
            mat: DMatrix::from_diagonal(diag),
            chol: DMatrix::from_diagonal(&diag.map(f64::sqrt)),
        })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    /// Lower-triangular `L` with `A = L Lᵀ`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut y = b.clone();
        self.chol.solve_lower_triangular_mut(&mut y);
        y
    }

    /// Solves `Lᵀ x = y`.
    pub fn solve_upper(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut x = y.clone();
        self.chol.tr_solve_lower_triangular_mut(&mut x);
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        self.chol.solve_lower_triangular_mut(&mut x);
        self.chol.tr_solve_lower_triangular_mut(&mut x);
        x
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let mut inv = self.solve_matrix(&DMatrix::identity(self.dim(), self.dim()));
        symmetrize(&mut inv);
        inv
    }

    /// `log |A| = 2 Σ log Lᵢᵢ`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// Replaces `a` by `(a + aᵀ)/2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Lower Cholesky factor of a symmetric matrix, reading only its lower triangle.
pub fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

pub fn spd_solve(a: &SpdMatrix, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.dim() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.len(),
        });
    }
    Ok(a.solve(b))
}

/// Symmetric-permutation partition of Ω and S around one pivot index.
///
/// The pivot moves to the leading position; the remaining indices keep their
/// relative order, which is what [`BlockPartition::others`] records.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPartition {
    pub pivot: usize,
    pub scalar_diag: f64,
    pub off_col: DVector<f64>,
    pub rest: DMatrix<f64>,
    pub s_scalar: f64,
    pub s_col: DVector<f64>,
    pub s_rest: DMatrix<f64>,
}

impl BlockPartition {
    /// Original indices of the non-pivot rows, in partition order.
    pub fn others(&self) -> Vec<usize> {
        let n = self.off_col.len() + 1;
        (0..n).filter(|&i| i != self.pivot).collect()
    }

    /// Reassembles `(Ω, S)` in the original index order.
    pub fn reassemble(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        (
            unpartition(self.pivot, self.scalar_diag, &self.off_col, &self.rest),
            unpartition(self.pivot, self.s_scalar, &self.s_col, &self.s_rest),
        )
    }
}

fn unpartition(pivot: usize, diag: f64, col: &DVector<f64>, rest: &DMatrix<f64>) -> DMatrix<f64> {
    let n = col.len() + 1;
    let others: Vec<usize> = (0..n).filter(|&i| i != pivot).collect();
    let mut m = DMatrix::zeros(n, n);
    m[(pivot, pivot)] = diag;
    for (a, &i) in others.iter().enumerate() {
        m[(i, pivot)] = col[a];
        m[(pivot, i)] = col[a];
        for (b, &k) in others.iter().enumerate() {
            m[(i, k)] = rest[(a, b)];
        }
    }
    m
}

pub fn partition_at(omega: &DMatrix<f64>, s: &DMatrix<f64>, j: usize) -> Result<BlockPartition> {
    let n = omega.nrows();
    if s.nrows() != n || s.ncols() != n || omega.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: s.nrows(),
        });
    }
    if j >= n {
        return Err(Error::IndexOutOfRange { index: j, dim: n });
    }
    let others: Vec<usize> = (0..n).filter(|&i| i != j).collect();
    let col = |m: &DMatrix<f64>| DVector::from_iterator(n - 1, others.iter().map(|&i| m[(i, j)]));
    let rest = |m: &DMatrix<f64>| DMatrix::from_fn(n - 1, n - 1, |a, b| m[(others[a], others[b])]);
    Ok(BlockPartition {
        pivot: j,
        scalar_diag: omega[(j, j)],
        off_col: col(omega),
        rest: rest(omega),
        s_scalar: s[(j, j)],
        s_col: col(s),
        s_rest: rest(s),
    })
}

/// `tr(A B)` without forming the product.
pub fn trace_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(&b.transpose()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    fn random_spd(n: usize, seed: &[f64]) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |i, j| seed[(i * n + j) % seed.len()] + 0.1 * (i as f64 - j as f64));
        &b * b.transpose() + DMatrix::identity(n, n) * (n as f64)
    }

    #[test]
    fn cholesky_identity() {
        let l = cholesky(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(l, DMatrix::identity(3, 3));
    }

    #[test]
    fn cholesky_two_by_two() {
        let a = dmatrix![4.0, 2.0; 2.0, 3.0];
        let l = cholesky(&a).unwrap();
        let expected = dmatrix![2.0, 0.0; 1.0, 2f64.sqrt()];
        assert!(rel_err(&l, &expected) < 1e-15);
        assert!(rel_err(&(&l * l.transpose()), &a) < 1e-15);
    }

    #[test]
    fn cholesky_indefinite() {
        let a = dmatrix![1.0, 2.0; 2.0, 1.0];
        assert!(matches!(cholesky(&a), Err(Error::NotPositiveDefinite)));
        assert!(matches!(SpdMatrix::new(a), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn solve_small_cases() {
        let x = spd_solve(&SpdMatrix::identity(2), &DVector::from_vec(vec![3.0, -1.0])).unwrap();
        assert_eq!(x.as_slice(), &[3.0, -1.0]);
        let a = SpdMatrix::new(dmatrix![2.0, 0.0; 0.0, 4.0]).unwrap();
        let x = spd_solve(&a, &DVector::from_vec(vec![2.0, 8.0])).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
        assert!(matches!(
            spd_solve(&a, &DVector::zeros(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn solve_residual_oracle() {
        let a = random_spd(5, &[0.3, -1.2, 0.7, 2.0, -0.4, 1.1, 0.05]);
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, -0.25]);
        let spd = SpdMatrix::new(a.clone()).unwrap();
        let x = spd_solve(&spd, &b).unwrap();
        assert!((&a * &x - &b).norm() / b.norm() <= 1e-10);
    }

    #[test]
    fn log_det_matches_product_of_eigen() {
        let a = dmatrix![4.0, 2.0; 2.0, 3.0];
        let spd = SpdMatrix::new(a).unwrap();
        assert!((spd.log_det() - 8f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn symmetrizes_on_construction() {
        let a = dmatrix![2.0, 1.0; 1.0 + 1e-13, 2.0];
        let spd = SpdMatrix::new(a).unwrap();
        assert_eq!(spd.matrix()[(0, 1)], spd.matrix()[(1, 0)]);
    }

    #[test]
    fn partition_identity() {
        let eye = DMatrix::identity(3, 3);
        for j in 0..3 {
            let p = partition_at(&eye, &eye, j).unwrap();
            assert_eq!(p.scalar_diag, 1.0);
            assert_eq!(p.off_col.as_slice(), &[0.0, 0.0]);
            assert_eq!(p.rest, DMatrix::identity(2, 2));
        }
    }

    #[test]
    fn partition_hand_permutation() {
        let om = dmatrix![2.0, 1.0; 1.0, 3.0];
        let p = partition_at(&om, &om, 1).unwrap();
        assert_eq!(p.scalar_diag, 3.0);
        assert_eq!(p.off_col.as_slice(), &[1.0]);
        assert_eq!(p.rest, dmatrix![2.0]);
        assert!(matches!(partition_at(&om, &om, 2), Err(Error::IndexOutOfRange { .. })));
    }

    proptest! {
        #[test]
        fn partition_round_trip_is_exact(n in 1usize..=6, vals in prop::collection::vec(-5.0f64..5.0, 36)) {
            let om = random_spd(n, &vals);
            let s = DMatrix::from_fn(n, n, |i, k| vals[(i + k) % vals.len()]);
            for j in 0..n {
                let p = partition_at(&om, &s, j).unwrap();
                let (om2, s2) = p.reassemble();
                prop_assert_eq!(&om2, &om);
                // S here is symmetric by construction (depends on i + k).
                prop_assert_eq!(&s2, &s);
            }
        }

        #[test]
        fn trace_identity_on_partition(n in 2usize..=6, vals in prop::collection::vec(-3.0f64..3.0, 36), j in 0usize..6) {
            let j = j % n;
            let om = random_spd(n, &vals);
            let s = random_spd(n, &vals[3..]);
            let p = partition_at(&om, &s, j).unwrap();
            let lhs = trace_of_product(&om, &s);
            let rhs = p.s_scalar * p.scalar_diag
                + 2.0 * p.s_col.dot(&p.off_col)
                + trace_of_product(&p.rest, &p.s_rest);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        }

        #[test]
        fn accepted_matrices_reconstruct(n in 1usize..=8, vals in prop::collection::vec(-4.0f64..4.0, 64)) {
            let a = random_spd(n, &vals);
            let spd = SpdMatrix::new(a.clone()).unwrap();
            let l = spd.factor();
            prop_assert!(rel_err(&(l * l.transpose()), &a) < 1e-10);
            for i in 0..n {
                prop_assert!(l[(i, i)] > 0.0);
                for k in (i + 1)..n {
                    prop_assert_eq!(l[(i, k)], 0.0);
                }
            }
        }
    }
}
