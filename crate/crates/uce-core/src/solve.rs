//! Symmetric positive-definite solves via Cholesky factorization.
//!
//! The editing update needs `X = B A^-1` with `A` symmetric positive
//! definite. We factor `A = L L^T` and solve `A X^T = B^T` column by
//! column; the inverse is never formed. A factorization that hits a
//! non-positive pivot is retried once with a small diagonal jitter
//! proportional to the mean diagonal magnitude, which absorbs the
//! roundoff-scale indefiniteness that weighted moment sums can
//! accumulate. If the retry also fails the matrix is reported as
//! singular together with the smallest pivot seen, so callers can
//! surface a quantitative diagnosis instead of a bare failure.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Vector};

/// Relative diagonal jitter applied on a failed factorization, scaled by
/// `trace(A) / n`.
const JITTER_REL: f64 = 1e-10;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug)]
pub struct Cholesky {
    l: Matrix,
    smallest_pivot: f64,
}

impl Cholesky {
    /// Factors `a = L L^T`.
    ///
    /// Only the lower triangle of `a` is read. Fails with
    /// [`Error::Singular`] when a pivot is non-finite or falls below
    /// `n * EPSILON * max_diag`, the scale at which the factor no longer
    /// carries information about the original matrix.
    pub fn factor(a: &Matrix) -> Result<Self> {
        assert_eq!(a.rows(), a.cols(), "cholesky of non-square matrix");
        let n = a.rows();
        let mut max_diag = 0.0f64;
        for i in 0..n {
            let d = libm::fabs(a.get(i, i));
            if d > max_diag {
                max_diag = d;
            }
        }
        let tol = n as f64 * f64::EPSILON * max_diag;

        let mut l = vec![0.0f64; n * n];
        let mut smallest_pivot = f64::INFINITY;
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                let ljk = l[j * n + k];
                d -= ljk * ljk;
            }
            if d < smallest_pivot {
                smallest_pivot = d;
            }
            if !(d.is_finite() && d > tol) {
                return Err(Error::Singular { smallest_pivot });
            }
            let root = libm::sqrt(d);
            l[j * n + j] = root;
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / root;
            }
        }
        let l = Matrix::from_vec(n, n, l).expect("factor dimensions are valid");
        Ok(Self { l, smallest_pivot })
    }

    /// Smallest diagonal pivot encountered during factorization.
    pub fn smallest_pivot(&self) -> f64 {
        self.smallest_pivot
    }

    /// Solves `A x = b` by forward and back substitution.
    pub fn solve_vec(&self, b: &Vector) -> Vector {
        let n = self.l.rows();
        assert_eq!(b.dim(), n, "right-hand side dimension mismatch");
        let mut x: Vec<f64> = b.as_slice().to_vec();
        // L y = b
        for i in 0..n {
            let mut s = x[i];
            for (k, xk) in x.iter().enumerate().take(i) {
                s -= self.l.get(i, k) * xk;
            }
            x[i] = s / self.l.get(i, i);
        }
        // L^T x = y
        for i in (0..n).rev() {
            let mut s = x[i];
            for (k, xk) in x.iter().enumerate().skip(i + 1) {
                s -= self.l.get(k, i) * xk;
            }
            x[i] = s / self.l.get(i, i);
        }
        Vector::from_vec(x).expect("solution dimension is valid")
    }

    /// Solves `A X = B` column by column.
    pub fn solve_mat(&self, b: &Matrix) -> Matrix {
        let n = self.l.rows();
        assert_eq!(b.rows(), n, "right-hand side dimension mismatch");
        let mut out = Matrix::zeros(n, b.cols());
        for j in 0..b.cols() {
            let col = Vector::from_vec((0..n).map(|i| b.get(i, j)).collect())
                .expect("column is nonempty");
            let x = self.solve_vec(&col);
            for i in 0..n {
                out.set(i, j, x.get(i));
            }
        }
        out
    }
}

/// Solves `X A = B` for `X`, with `A` symmetric positive definite.
///
/// Equivalent to `X = B A^-1`, computed as `A X^T = B^T` through the
/// Cholesky factor. On a failed factorization, retries once with
/// `JITTER_REL * trace(A) / n` added to the diagonal before giving up.
pub fn solve_right_spd(b: &Matrix, a: &Matrix) -> Result<Matrix> {
    assert_eq!(a.rows(), a.cols(), "system matrix must be square");
    assert_eq!(b.cols(), a.rows(), "right-hand side width mismatch");
    let chol = match Cholesky::factor(a) {
        Ok(c) => c,
        Err(Error::Singular { .. }) => {
            let n = a.rows();
            let jitter = JITTER_REL * a.trace() / n as f64;
            let mut bumped = a.clone();
            for i in 0..n {
                let d = bumped.get(i, i);
                bumped.set(i, i, d + jitter);
            }
            Cholesky::factor(&bumped)?
        }
        Err(e) => return Err(e),
    };
    Ok(chol.solve_mat(&b.transpose()).transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd_test_matrix() -> Matrix {
        // A = M^T M + I for a fixed M, guaranteed SPD.
        let m = Matrix::from_fn(4, 4, |i, j| ((i * 5 + j * 3) % 7) as f64 - 3.0);
        let mut a = m.transpose().matmul(&m);
        for i in 0..4 {
            a.set(i, i, a.get(i, i) + 1.0);
        }
        a
    }

    #[test]
    fn factor_reconstructs_the_matrix() {
        let a = spd_test_matrix();
        let c = Cholesky::factor(&a).unwrap();
        let rebuilt = c.l.matmul(&c.l.transpose());
        assert!(a.max_abs_diff(&rebuilt) < 1e-12);
    }

    #[test]
    fn solve_vec_inverts_the_product() {
        let a = spd_test_matrix();
        let x_true = Vector::from_vec(vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let b = a.mul_vec(&x_true);
        let x = Cholesky::factor(&a).unwrap().solve_vec(&b);
        assert!(x.distance(&x_true) < 1e-10);
    }

    #[test]
    fn solve_right_recovers_left_factor() {
        let a = spd_test_matrix();
        let x_true = Matrix::from_fn(3, 4, |i, j| (i as f64) - (j as f64) * 0.25);
        let b = x_true.matmul(&a);
        let x = solve_right_spd(&b, &a).unwrap();
        assert!(x.max_abs_diff(&x_true) < 1e-10);
    }

    #[test]
    fn indefinite_matrix_reports_smallest_pivot() {
        let a = Matrix::from_vec(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        match Cholesky::factor(&a) {
            Err(Error::Singular { smallest_pivot }) => {
                assert!((smallest_pivot - (-3.0)).abs() < 1e-12);
            }
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn zero_matrix_is_singular_even_after_jitter() {
        let a = Matrix::zeros(3, 3);
        let b = Matrix::identity(3);
        assert!(matches!(
            solve_right_spd(&b, &a),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn jitter_rescues_a_barely_semidefinite_system() {
        // Rank-one Gram matrix: exactly singular, but trace-scaled jitter
        // makes it solvable. The solution is meaningful only up to the
        // jitter scale; this test exercises the retry path, not accuracy.
        let v = Vector::from_vec(vec![1.0, 1.0]).unwrap();
        let mut a = Matrix::zeros(2, 2);
        a.add_outer_in_place(1.0, &v, &v);
        let b = Matrix::identity(2);
        assert!(solve_right_spd(&b, &a).is_ok());
    }
}
