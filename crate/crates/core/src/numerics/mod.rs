//! Dense least-squares kernels.
//!
//! Every solve goes through an orthogonal factorization (Householder QR for
//! coefficients, SVD for rank decisions and projections). Normal equations
//! are never formed.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Default relative rank tolerance: `eps * max(rows, cols)`.
pub fn default_rank_tolerance(rows: usize, cols: usize) -> f64 {
    f64::EPSILON * rows.max(cols).max(1) as f64
}

/// Effective rank and condition estimate of a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub rank: usize,
    /// Largest over smallest retained singular value; infinite when rank is 0.
    pub condition: f64,
    /// Singular values in descending order.
    pub singular_values: Vec<f64>,
}

/// Counts singular values above `tol * sigma_max`.
pub fn rank_report(a: &Matrix, tol: f64) -> RankReport {
    if a.nrows() == 0 || a.ncols() == 0 {
        return RankReport { rank: 0, condition: f64::INFINITY, singular_values: Vec::new() };
    }
    let mut sv: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    let largest = sv[0];
    let cutoff = tol * largest;
    let retained: Vec<f64> = sv.iter().copied().filter(|&s| s > cutoff && s > 0.0).collect();
    let rank = retained.len();
    let condition = match retained.last() {
        Some(&smallest) => largest / smallest,
        None => f64::INFINITY,
    };
    RankReport { rank, condition, singular_values: sv }
}

/// [`rank_report`] at [`default_rank_tolerance`].
pub fn rank_report_default(a: &Matrix) -> RankReport {
    rank_report(a, default_rank_tolerance(a.nrows(), a.ncols()))
}

/// Thin QR factorization of a full-column-rank design.
#[derive(Debug, Clone)]
pub struct QrFactor {
    q: Matrix,
    r: Matrix,
    rank: RankReport,
}

impl QrFactor {
    /// Factors `design` (p×q, p ≥ q). Fails when its effective rank is below q.
    pub fn new(design: &Matrix) -> Result<Self> {
        let (p, q) = design.shape();
        if p < q {
            return Err(Error::Shape(alloc::format!(
                "least squares needs rows >= columns, got {p}x{q}"
            )));
        }
        let rank = rank_report_default(design);
        if rank.rank < q {
            return Err(Error::RankDeficient { rank: rank.rank, columns: q, condition: rank.condition });
        }
        let qr = design.clone().qr();
        Ok(Self { q: qr.q(), r: qr.r(), rank })
    }

    pub fn rank_report(&self) -> &RankReport {
        &self.rank
    }

    pub fn ncols(&self) -> usize {
        self.r.ncols()
    }

    /// Coefficients minimizing `||design * coef - response||_F`.
    pub fn solve(&self, response: &Matrix) -> Result<Matrix> {
        if response.nrows() != self.q.nrows() {
            return Err(Error::Shape(alloc::format!(
                "response has {} rows, design has {}",
                response.nrows(),
                self.q.nrows()
            )));
        }
        let qtb = self.q.transpose() * response;
        self.r
            .solve_upper_triangular(&qtb)
            .ok_or(Error::RankDeficient { rank: self.rank.rank, columns: self.ncols(), condition: self.rank.condition })
    }

    /// `(design' design)^{-1}` computed as `R^{-1} R^{-T}`.
    pub fn inverse_gram(&self) -> Result<Matrix> {
        let q = self.ncols();
        let r_inv = self
            .r
            .solve_upper_triangular(&Matrix::identity(q, q))
            .ok_or(Error::RankDeficient { rank: self.rank.rank, columns: q, condition: self.rank.condition })?;
        Ok(&r_inv * r_inv.transpose())
    }
}

/// Least-squares coefficients (q×c) of `response` (p×c) on `design` (p×q).
pub fn least_squares(design: &Matrix, response: &Matrix) -> Result<Matrix> {
    QrFactor::new(design)?.solve(response)
}

/// Projection onto the orthogonal complement of a matrix's column space.
///
/// Stores an orthonormal basis of the retained left singular subspace, so a
/// rank-deficient source still yields an exact (idempotent, symmetric)
/// projector.
#[derive(Debug, Clone)]
pub struct Annihilator {
    basis: Matrix,
    rank: RankReport,
}

impl Annihilator {
    pub fn new(a: &Matrix) -> Self {
        let p = a.nrows();
        let rank = rank_report_default(a);
        if a.ncols() == 0 || rank.rank == 0 {
            return Self { basis: Matrix::zeros(p, 0), rank };
        }
        let svd = a.clone().svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let cutoff = default_rank_tolerance(a.nrows(), a.ncols()) * rank.singular_values[0];
        let keep: Vec<usize> = svd
            .singular_values
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > cutoff && s > 0.0)
            .map(|(j, _)| j)
            .collect();
        let mut basis = Matrix::zeros(p, keep.len());
        for (dst, &src) in keep.iter().enumerate() {
            basis.set_column(dst, &u.column(src));
        }
        Self { basis, rank }
    }

    pub fn rows(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank_report(&self) -> &RankReport {
        &self.rank
    }

    /// `M_A B`.
    pub fn apply(&self, b: &Matrix) -> Matrix {
        assert_eq!(b.nrows(), self.rows(), "annihilator row mismatch");
        if self.basis.ncols() >= self.rows() {
            return Matrix::zeros(b.nrows(), b.ncols());
        }
        b - &self.basis * (self.basis.transpose() * b)
    }

    /// Explicit p×p matrix `I - A (A'A)^+ A'`.
    pub fn matrix(&self) -> Matrix {
        let p = self.rows();
        self.apply(&Matrix::identity(p, p))
    }
}

/// `M_A B` in one call.
pub fn annihilate(a: &Matrix, b: &Matrix) -> Matrix {
    Annihilator::new(a).apply(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn lcg_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        Matrix::from_fn(rows, cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn column_of_ones_gives_mean() {
        let design = Matrix::from_element(3, 1, 1.0);
        let response = Matrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let coef = least_squares(&design, &response).unwrap();
        assert_relative_eq!(coef[(0, 0)], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn square_nonsingular_solves_to_identity() {
        let design = Matrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0]);
        let coef = least_squares(&design, &design).unwrap();
        assert_relative_eq!(coef, Matrix::identity(3, 3), epsilon = 1e-12);
    }

    #[test]
    fn noiseless_tall_system_is_recovered() {
        let design = lcg_matrix(50, 3, 7);
        let truth = Matrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let response = &design * &truth;
        let coef = least_squares(&design, &response).unwrap();
        assert_relative_eq!(coef, truth, epsilon = 1e-10);
        assert!((&design * &coef - &response).norm() < 1e-12);
    }

    #[test]
    fn duplicated_column_is_rejected_with_rank() {
        let mut design = lcg_matrix(10, 3, 3);
        let c0 = design.column(0).into_owned();
        design.set_column(2, &c0);
        let err = least_squares(&design, &Matrix::zeros(10, 1)).unwrap_err();
        match err {
            Error::RankDeficient { rank, columns, .. } => {
                assert_eq!((rank, columns), (2, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wide_design_is_a_shape_error() {
        assert!(matches!(least_squares(&Matrix::zeros(2, 3), &Matrix::zeros(2, 1)), Err(Error::Shape(_))));
    }

    #[test]
    fn demeaning_by_ones() {
        let a = Matrix::from_element(4, 1, 1.0);
        let b = Matrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let out = annihilate(&a, &b);
        assert_relative_eq!(out, Matrix::from_column_slice(4, 1, &[-1.5, -0.5, 0.5, 1.5]), epsilon = 1e-14);
    }

    #[test]
    fn annihilates_own_columns() {
        let a = lcg_matrix(6, 2, 11);
        assert!(annihilate(&a, &a).amax() < 1e-12);
    }

    #[test]
    fn full_row_rank_source_gives_zero() {
        let a = lcg_matrix(3, 4, 5);
        let b = lcg_matrix(3, 2, 6);
        assert_eq!(annihilate(&a, &b), Matrix::zeros(3, 2));
    }

    #[test]
    fn idempotent_on_small_instance() {
        let a = lcg_matrix(6, 2, 1);
        let b = lcg_matrix(6, 3, 2);
        let once = annihilate(&a, &b);
        let twice = annihilate(&a, &once);
        assert!((&twice - &once).amax() < 1e-12);
    }

    #[test]
    fn rank_of_identity_and_duplicate() {
        let r = rank_report_default(&Matrix::identity(3, 3));
        assert_eq!(r.rank, 3);
        assert_relative_eq!(r.condition, 1.0, epsilon = 1e-14);

        let mut a = lcg_matrix(8, 4, 9);
        let c1 = a.column(1).into_owned();
        a.set_column(3, &c1);
        assert_eq!(rank_report_default(&a).rank, 3);
    }

    #[test]
    fn rank_deficient_annihilator_is_still_a_projector() {
        let mut a = lcg_matrix(7, 3, 21);
        let c0 = a.column(0).into_owned();
        a.set_column(2, &(c0 * 2.0));
        let m = Annihilator::new(&a);
        assert_eq!(m.rank_report().rank, 2);
        let mm = m.matrix();
        assert!((&mm * &mm - &mm).amax() < 1e-12);
        assert!(m.apply(&a).amax() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn projector_properties(rows in 3usize..120, cols in 1usize..10, seed in any::<u64>()) {
            let cols = cols.min(rows - 1);
            let a = lcg_matrix(rows, cols, seed);
            let m = Annihilator::new(&a).matrix();
            let scale = 1.0f64.max(m.amax());
            prop_assert!((&m * &m - &m).amax() <= 1e-10 * scale);
            prop_assert!((&m - m.transpose()).amax() <= 1e-10 * scale);
            prop_assert!((&m * &a).amax() <= 1e-10 * a.amax().max(1.0));
        }

        #[test]
        fn residuals_orthogonal_to_design(rows in 4usize..80, cols in 1usize..4, seed in any::<u64>()) {
            let a = lcg_matrix(rows, cols, seed);
            let b = lcg_matrix(rows, 2, seed ^ 0xdead_beef);
            let coef = least_squares(&a, &b).unwrap();
            let resid = &b - &a * coef;
            prop_assert!((a.transpose() * resid).norm() <= 1e-8 * a.norm() * b.norm());
        }
    }
}
