//! Intra-block orthogonalization: CholQR, CholQR2, recursive CholQR and
//! randomized Householder CholQR.

use crate::dense::{
    apply_inv_upper, cholesky, cholesky_partial, gram, householder_qr, DenseMatrix, MatRef,
    UpperTriangular,
};
use crate::error::{Error, Result};
use crate::ledger::ReduceLedger;
use crate::sketch::{apply_sketch, SketchOperator};

/// `V = Q R`.
#[derive(Debug, Clone)]
pub struct QrFactors {
    pub q: DenseMatrix,
    pub r: UpperTriangular,
}

/// One reduce: Gram matrix, Cholesky, triangular solve.
pub fn cholqr<'a>(v: impl Into<MatRef<'a>>, ledger: &mut ReduceLedger) -> Result<QrFactors> {
    let v = v.into();
    let g = gram(v, ledger);
    let r = cholesky(&g)?;
    let q = apply_inv_upper(v, &r)?;
    Ok(QrFactors { q, r })
}

/// Two CholQR passes; `R = T R_1`.
pub fn cholqr2<'a>(v: impl Into<MatRef<'a>>, ledger: &mut ReduceLedger) -> Result<QrFactors> {
    let first = cholqr(v, ledger)?;
    let second = cholqr(&first.q, ledger)?;
    Ok(QrFactors {
        q: second.q,
        r: second.r.mul(&first.r),
    })
}

/// Sketch, Householder QR of the sketch, precondition `V R_1^{-1}`, then
/// CholQR. Two reduces.
pub fn rand_cholqr<'a>(
    v: impl Into<MatRef<'a>>,
    theta: &SketchOperator,
    ledger: &mut ReduceLedger,
) -> Result<QrFactors> {
    let v = v.into();
    let r1 = sketched_triangle(v, theta, ledger)?;
    let preconditioned = apply_inv_upper(v, &r1)?;
    let second = cholqr(&preconditioned, ledger)?;
    Ok(QrFactors {
        q: second.q,
        r: second.r.mul(&r1),
    })
}

/// `R` factor of a Householder QR of `Theta^T V`.
pub(crate) fn sketched_triangle(
    v: MatRef<'_>,
    theta: &SketchOperator,
    ledger: &mut ReduceLedger,
) -> Result<UpperTriangular> {
    if theta.sketch_dim() < v.cols() {
        return Err(Error::Dimension(format!(
            "sketch size {} is below the panel width {}",
            theta.sketch_dim(),
            v.cols()
        )));
    }
    let sketched = apply_sketch(theta, v, ledger)?;
    Ok(householder_qr(&sketched).1)
}

/// Outcome of recursive CholQR. Columns of `q` correspond to the input
/// columns listed in `kept`; `r` is `kept.len() x input_cols` with
/// `V[:, kept] = Q R[:, kept]` and the discarded columns represented
/// approximately in `range(Q)`.
#[derive(Debug, Clone)]
pub struct RecursiveQr {
    pub q: DenseMatrix,
    pub r: DenseMatrix,
    pub kept: Vec<usize>,
    /// Number of Cholesky breakdowns recovered from.
    pub depth: usize,
}

/// CholQR that recovers from a pivot failure at step `k` by keeping the
/// first `k - 1` columns, projecting the rest with the partial factor and
/// recursing on them. A failure on the first remaining column discards
/// every remaining column.
pub fn recursive_cholqr<'a>(
    v: impl Into<MatRef<'a>>,
    ledger: &mut ReduceLedger,
) -> Result<RecursiveQr> {
    let v = v.into();
    let c = v.cols();
    let mut q_cols: Vec<Vec<f64>> = Vec::new();
    let mut r_rows: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    let mut depth = 0;

    let mut work = v.to_owned();
    let mut offset = 0;
    let mut floor: Option<f64> = None;
    while offset < c {
        let g = gram(work.view(), ledger);
        let floor = *floor.get_or_insert_with(|| {
            f64::EPSILON * (0..g.rows()).fold(0.0_f64, |m, i| m.max(g[(i, i)]))
        });
        let partial = cholesky_partial(&g, floor);
        let k = partial.completed;
        if k == 0 {
            break;
        }
        let width = work.cols();
        let r11 = UpperTriangular::from_dense(&partial.factor.block(0..k, 0..k));
        let q1 = apply_inv_upper(work.columns(0..k), &r11)?;
        for i in 0..k {
            let mut row = vec![0.0; c];
            for j in i..width {
                row[offset + j] = partial.factor[(i, j)];
            }
            r_rows.push(row);
            q_cols.push(q1.col(i).to_vec());
            kept.push(offset + i);
        }
        if k == width {
            break;
        }
        depth += 1;
        let r12 = partial.factor.block(0..k, k..width);
        let mut rest = work.columns(k..width).to_owned();
        rest.sub_mul(q1.view(), &r12);
        work = rest;
        offset += k;
    }

    if kept.is_empty() {
        return Err(Error::AllColumnsDiscarded);
    }
    let q = DenseMatrix::from_columns(&q_cols);
    let r = DenseMatrix::from_fn(r_rows.len(), c, |i, j| r_rows[i][j]);
    Ok(RecursiveQr { q, r, kept, depth })
}
