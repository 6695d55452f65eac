//! Orthogonality and conditioning measurements.

use crate::dense::{singular_values, DenseMatrix, MatRef};
use crate::error::{Error, Result};

/// `||I - Q^T Q||_2`.
pub fn orthogonality_error<'a>(q: impl Into<MatRef<'a>>) -> f64 {
    let q = q.into();
    let mut defect = DenseMatrix::identity(q.cols());
    defect.add_assign(&{
        let mut g = q.t_mul(q);
        g.scale(-1.0);
        g
    });
    singular_values(defect.view())
        .first()
        .copied()
        .unwrap_or(0.0)
}

/// `sigma_max / sigma_min` from the singular values of `V` itself.
pub fn condition_number<'a>(v: impl Into<MatRef<'a>>) -> Result<f64> {
    let s = singular_values(v.into());
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if hi > 0.0 => Ok(if lo > 0.0 { hi / lo } else { f64::INFINITY }),
        _ => Err(Error::ZeroMatrix),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::householder_qr;
    use crate::testutil::gaussian_matrix;
    use proptest::prelude::*;

    #[test]
    fn identity_is_orthonormal() {
        assert_eq!(orthogonality_error(&DenseMatrix::identity(5)), 0.0);
    }

    #[test]
    fn scaled_column_error() {
        let q = DenseMatrix::from_rows(&[&[2.0], &[0.0]]);
        assert_eq!(orthogonality_error(&q), 3.0);
    }

    #[test]
    fn householder_basis_is_orthonormal() {
        let (q, _) = householder_qr(&gaussian_matrix(500, 20, 1));
        assert!(orthogonality_error(&q) <= 1e-14);
    }

    #[test]
    fn condition_examples() {
        assert!((condition_number(&DenseMatrix::identity(4)).unwrap() - 1.0).abs() < 1e-15);
        let mut v = DenseMatrix::zeros(6, 2);
        v[(0, 0)] = 1.0;
        v[(3, 1)] = 1e-8;
        assert!((condition_number(&v).unwrap() / 1e8 - 1.0).abs() < 1e-12);
        assert!(matches!(
            condition_number(&DenseMatrix::zeros(3, 2)),
            Err(Error::ZeroMatrix)
        ));
    }

    proptest! {
        #[test]
        fn condition_is_scale_invariant(seed in 0u64..200, exp in prop::sample::select(vec![-3i32, 0, 3])) {
            let v = gaussian_matrix(40, 5, seed);
            let mut scaled = v.clone();
            scaled.scale(10f64.powi(exp));
            let a = condition_number(&v).unwrap();
            let b = condition_number(&scaled).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * a);
        }

        #[test]
        fn orthogonality_error_ignores_column_order(seed in 0u64..200, shift in 1usize..6) {
            let mut q = gaussian_matrix(30, 6, seed);
            q.scale(0.2);
            let perm: Vec<Vec<f64>> = (0..6).map(|j| q.col((j + shift) % 6).to_vec()).collect();
            let p = DenseMatrix::from_columns(&perm);
            let (a, b) = (orthogonality_error(&q), orthogonality_error(&p));
            prop_assert!((a - b).abs() <= 1e-13 * a.max(1.0));
        }
    }
}
