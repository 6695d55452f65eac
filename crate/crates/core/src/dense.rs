//! Dense column-major matrices and the small set of kernels every
//! orthogonalization scheme is assembled from: Gram matrices, Cholesky,
//! Householder QR and triangular back substitution.

use std::fmt;
use std::ops::{Index, IndexMut, Range};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ledger::{ReduceLedger, ReducePhase};

/// Column-major `rows x cols` real matrix.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Borrowed view of a contiguous range of columns.
#[derive(Clone, Copy)]
pub struct MatRef<'a> {
    rows: usize,
    cols: usize,
    data: &'a [f64],
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::eye(n, n)
    }

    /// `rows x cols` matrix with ones on the main diagonal.
    pub fn eye(rows: usize, cols: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows.min(cols) {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// # Panics
    /// If `data.len() != rows * cols`.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "column-major data has wrong length"
        );
        Self { rows, cols, data }
    }

    /// Builds a matrix from row slices; convenient for small literals.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut m = Self::zeros(nrows, ncols);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), ncols, "ragged rows");
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Self {
        let rows = columns.first().map_or(0, |c| c.len());
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            assert_eq!(c.len(), rows, "columns have different lengths");
            data.extend_from_slice(c);
        }
        Self::from_col_major(rows, columns.len(), data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m.data[j * rows + i] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn view(&self) -> MatRef<'_> {
        MatRef {
            rows: self.rows,
            cols: self.cols,
            data: &self.data,
        }
    }

    pub fn columns(&self, range: Range<usize>) -> MatRef<'_> {
        assert!(range.end <= self.cols, "column range out of bounds");
        MatRef {
            rows: self.rows,
            cols: range.end - range.start,
            data: &self.data[range.start * self.rows..range.end * self.rows],
        }
    }

    /// Overwrites columns `start..start + block.cols()` with `block`.
    pub fn set_columns(&mut self, start: usize, block: MatRef<'_>) {
        assert_eq!(block.rows, self.rows, "row mismatch in set_columns");
        assert!(
            start + block.cols <= self.cols,
            "column range out of bounds"
        );
        self.data[start * self.rows..(start + block.cols) * self.rows].copy_from_slice(block.data);
    }

    /// Copy of the submatrix `rows x cols`.
    pub fn block(&self, rows: Range<usize>, cols: Range<usize>) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(rows.len(), cols.len());
        for (jj, j) in cols.enumerate() {
            out.col_mut(jj).copy_from_slice(&self.col(j)[rows.clone()]);
        }
        out
    }

    pub fn set_block(&mut self, row: usize, col: usize, src: &DenseMatrix) {
        assert!(row + src.rows <= self.rows && col + src.cols <= self.cols);
        for j in 0..src.cols {
            let dst = &mut self.col_mut(col + j)[row..row + src.rows];
            dst.copy_from_slice(src.col(j));
        }
    }

    pub fn hstack(blocks: &[MatRef<'_>]) -> DenseMatrix {
        let rows = blocks.first().map_or(0, |b| b.rows);
        let mut data = Vec::new();
        let mut cols = 0;
        for b in blocks {
            assert_eq!(b.rows, rows, "row mismatch in hstack");
            data.extend_from_slice(b.data);
            cols += b.cols;
        }
        DenseMatrix::from_col_major(rows, cols, data)
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `self * other` for general (usually small) matrices.
    pub fn mul(&self, other: &DenseMatrix) -> DenseMatrix {
        self.view().mul(other)
    }

    /// `self^T * other` without touching the ledger.
    pub fn t_mul(&self, other: &DenseMatrix) -> DenseMatrix {
        self.view().t_mul(other.view())
    }

    /// `self -= basis * coeffs`.
    pub fn sub_mul(&mut self, basis: MatRef<'_>, coeffs: &DenseMatrix) {
        assert_eq!(basis.rows, self.rows);
        assert_eq!(basis.cols, coeffs.rows);
        assert_eq!(coeffs.cols, self.cols);
        let rows = self.rows;
        for j in 0..self.cols {
            let dst = &mut self.data[j * rows..(j + 1) * rows];
            for k in 0..basis.cols {
                let c = coeffs[(k, j)];
                if c != 0.0 {
                    axpy(-c, basis.col(k), dst);
                }
            }
        }
    }

    pub fn add_assign(&mut self, other: &DenseMatrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        DenseMatrix::from_col_major(self.rows, self.cols, data)
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn norm_fro(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[j * self.rows + i]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[j * self.rows + i]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{}", self.rows, self.cols)?;
        for i in 0..self.rows.min(12) {
            let row: Vec<String> = (0..self.cols.min(8))
                .map(|j| format!("{:>11.4e}", self[(i, j)]))
                .collect();
            writeln!(f, "  [{}]", row.join(" "))?;
        }
        Ok(())
    }
}

impl<'a> MatRef<'a> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn col(&self, j: usize) -> &'a [f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    pub fn columns(&self, range: Range<usize>) -> MatRef<'a> {
        assert!(range.end <= self.cols, "column range out of bounds");
        MatRef {
            rows: self.rows,
            cols: range.end - range.start,
            data: &self.data[range.start * self.rows..range.end * self.rows],
        }
    }

    pub fn to_owned(&self) -> DenseMatrix {
        DenseMatrix::from_col_major(self.rows, self.cols, self.data.to_vec())
    }

    /// `self^T * other`, a purely local product.
    pub fn t_mul(&self, other: MatRef<'_>) -> DenseMatrix {
        assert_eq!(self.rows, other.rows, "row mismatch in t_mul");
        let mut out = DenseMatrix::zeros(self.cols, other.cols);
        for j in 0..other.cols {
            let b = other.col(j);
            for i in 0..self.cols {
                out[(i, j)] = dot(self.col(i), b);
            }
        }
        out
    }

    /// `self * coeffs`.
    pub fn mul(&self, coeffs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, coeffs.rows, "inner dimension mismatch");
        let mut out = DenseMatrix::zeros(self.rows, coeffs.cols);
        for j in 0..coeffs.cols {
            let dst = out.col_mut(j);
            for k in 0..self.cols {
                let c = coeffs[(k, j)];
                if c != 0.0 {
                    axpy(c, self.col(k), dst);
                }
            }
        }
        out
    }
}

impl<'a> From<&'a DenseMatrix> for MatRef<'a> {
    fn from(m: &'a DenseMatrix) -> Self {
        m.view()
    }
}

/// Upper-triangular square matrix stored packed by rows.
#[derive(Clone, PartialEq)]
pub struct UpperTriangular {
    dim: usize,
    packed: Vec<f64>,
}

impl UpperTriangular {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            packed: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut r = Self::zeros(dim);
        for i in 0..dim {
            r.set(i, i, 1.0);
        }
        r
    }

    /// Takes the upper triangle of a square matrix; the strictly lower part
    /// is ignored.
    pub fn from_dense(m: &DenseMatrix) -> Self {
        assert_eq!(m.rows(), m.cols(), "triangular factor must be square");
        let mut r = Self::zeros(m.rows());
        for i in 0..m.rows() {
            for j in i..m.cols() {
                r.set(i, j, m[(i, j)]);
            }
        }
        r
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        // Rows above `i` hold n, n-1, ..., n-i+1 entries.
        i * self.dim - i * i.saturating_sub(1) / 2 + (j - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i > j {
            0.0
        } else {
            self.packed[self.offset(i, j)]
        }
    }

    /// # Panics
    /// If `i > j`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            i <= j,
            "cannot set strictly lower entry of an upper-triangular matrix"
        );
        let k = self.offset(i, j);
        self.packed[k] = v;
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.get(i, i)
    }

    /// Product of two upper-triangular matrices.
    pub fn mul(&self, other: &UpperTriangular) -> UpperTriangular {
        assert_eq!(self.dim, other.dim);
        let mut out = UpperTriangular::zeros(self.dim);
        for i in 0..self.dim {
            for j in i..self.dim {
                let s: f64 = (i..=j).map(|k| self.get(i, k) * other.get(k, j)).sum();
                out.set(i, j, s);
            }
        }
        out
    }

    /// `a * self`.
    pub fn right_mul(&self, a: &DenseMatrix) -> DenseMatrix {
        assert_eq!(a.cols(), self.dim);
        let mut out = DenseMatrix::zeros(a.rows(), self.dim);
        for j in 0..self.dim {
            let dst = out.col_mut(j);
            for k in 0..=j {
                let c = self.get(k, j);
                if c != 0.0 {
                    axpy(c, a.col(k), dst);
                }
            }
        }
        out
    }

    /// Solves `self * x = b` by back substitution.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(b.len(), self.dim);
        let mut x = b.to_vec();
        for i in (0..self.dim).rev() {
            let d = self.get(i, i);
            if d == 0.0 {
                return Err(Error::SingularTriangular { index: i });
            }
            let s: f64 = (i + 1..self.dim).map(|k| self.get(i, k) * x[k]).sum();
            x[i] = (x[i] - s) / d;
        }
        Ok(x)
    }
}

impl fmt::Debug for UpperTriangular {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UpperTriangular{:?}", self.to_dense())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// `V^T V`, counted as one reduce.
pub fn gram(v: MatRef<'_>, ledger: &mut ReduceLedger) -> DenseMatrix {
    ledger.record(ReducePhase::Gram);
    let k = v.cols();
    let mut g = DenseMatrix::zeros(k, k);
    for j in 0..k {
        for i in 0..=j {
            let d = dot(v.col(i), v.col(j));
            g[(i, j)] = d;
            g[(j, i)] = d;
        }
    }
    g
}

/// `Q^T V`, counted as one reduce in `phase`.
pub fn inner_products(
    q: MatRef<'_>,
    v: MatRef<'_>,
    ledger: &mut ReduceLedger,
    phase: ReducePhase,
) -> DenseMatrix {
    ledger.record(phase);
    q.t_mul(v)
}

/// Result of a right-looking Cholesky sweep that may stop early.
pub(crate) struct PartialCholesky {
    /// Rows `0..completed` hold the finished factor rows.
    pub factor: DenseMatrix,
    pub completed: usize,
}

/// Right-looking Cholesky that stops at the first pivot `<= floor`.
/// Every completed step fills an entire row of the factor, which is what the
/// recursive CholQR recovery path reuses.
pub(crate) fn cholesky_partial(g: &DenseMatrix, floor: f64) -> PartialCholesky {
    let n = g.rows();
    let mut work = g.clone();
    let mut factor = DenseMatrix::zeros(n, n);
    for k in 0..n {
        let pivot = work[(k, k)];
        if !pivot.is_finite() || pivot <= floor {
            return PartialCholesky {
                factor,
                completed: k,
            };
        }
        let rkk = pivot.sqrt();
        factor[(k, k)] = rkk;
        for j in k + 1..n {
            factor[(k, j)] = work[(k, j)] / rkk;
        }
        for j in k + 1..n {
            let rkj = factor[(k, j)];
            for i in k + 1..=j {
                work[(i, j)] -= factor[(k, i)] * rkj;
            }
        }
    }
    PartialCholesky {
        factor,
        completed: n,
    }
}

/// Upper Cholesky factor `R` with `R^T R = G`.
///
/// A pivot is rejected when it is not larger than `eps * max(diag(G))`, which
/// also catches near-breakdown where rounding leaves a tiny positive pivot.
pub fn cholesky(g: &DenseMatrix) -> Result<UpperTriangular> {
    assert_eq!(g.rows(), g.cols(), "Gram matrix must be square");
    let max_diag = (0..g.rows()).fold(0.0_f64, |m, i| m.max(g[(i, i)]));
    cholesky_with_floor(g, f64::EPSILON * max_diag)
}

pub(crate) fn cholesky_with_floor(g: &DenseMatrix, floor: f64) -> Result<UpperTriangular> {
    let p = cholesky_partial(g, floor);
    if p.completed < g.rows() {
        return Err(Error::NonPositivePivot {
            step: p.completed + 1,
        });
    }
    Ok(UpperTriangular::from_dense(&p.factor))
}

/// Thin Householder QR, `V = Q R` with `Q` of the same shape as `V` and
/// nonnegative diagonal in `R`. A column that is exactly zero below the
/// diagonal leaves a zero diagonal entry; the matching `Q` column still
/// completes an orthonormal set.
#[allow(clippy::needless_range_loop)]
pub fn householder_qr(v: &DenseMatrix) -> (DenseMatrix, UpperTriangular) {
    let (m, k) = (v.rows(), v.cols());
    assert!(m >= k, "householder_qr needs rows >= cols");
    let mut a = v.clone();
    let mut tau = vec![0.0; k];

    for j in 0..k {
        let (alpha, xnorm) = {
            let x = &a.col(j)[j..];
            (x[0], norm2(&x[1..]))
        };
        if xnorm == 0.0 {
            continue;
        }
        let beta = -alpha.signum() * alpha.hypot(xnorm);
        tau[j] = (beta - alpha) / beta;
        let inv = 1.0 / (alpha - beta);
        {
            let x = &mut a.col_mut(j)[j..];
            x[0] = beta;
            x[1..].iter_mut().for_each(|e| *e *= inv);
        }
        let reflector: Vec<f64> = a.col(j)[j + 1..].to_vec();
        for c in j + 1..k {
            apply_reflector(&reflector, tau[j], &mut a.col_mut(c)[j..]);
        }
    }

    let mut r = UpperTriangular::zeros(k);
    for i in 0..k {
        for j in i..k {
            r.set(i, j, a[(i, j)]);
        }
    }

    let mut q = DenseMatrix::eye(m, k);
    for j in (0..k).rev() {
        if tau[j] == 0.0 {
            continue;
        }
        let reflector: Vec<f64> = a.col(j)[j + 1..].to_vec();
        for c in j..k {
            apply_reflector(&reflector, tau[j], &mut q.col_mut(c)[j..]);
        }
    }

    for i in 0..k {
        if r.diag(i) < 0.0 {
            for j in i..k {
                let v = r.get(i, j);
                r.set(i, j, -v);
            }
            q.col_mut(i).iter_mut().for_each(|e| *e = -*e);
        }
    }
    (q, r)
}

/// Applies `I - tau [1; w][1; w]^T` to `x`.
fn apply_reflector(w: &[f64], tau: f64, x: &mut [f64]) {
    let s = x[0] + dot(w, &x[1..]);
    let ts = tau * s;
    x[0] -= ts;
    axpy(-ts, w, &mut x[1..]);
}

/// `X = V R^{-1}`, computed column by column.
pub fn apply_inv_upper(v: MatRef<'_>, r: &UpperTriangular) -> Result<DenseMatrix> {
    if v.cols() != r.dim() {
        return Err(Error::Dimension(format!(
            "panel has {} columns but factor is {}x{}",
            v.cols(),
            r.dim(),
            r.dim()
        )));
    }
    if let Some(index) = (0..r.dim()).find(|&i| r.diag(i) == 0.0) {
        return Err(Error::SingularTriangular { index });
    }
    let mut x = v.to_owned();
    let rows = x.rows();
    for j in 0..r.dim() {
        let (done, rest) = x.data.split_at_mut(j * rows);
        let xj = &mut rest[..rows];
        for i in 0..j {
            let c = r.get(i, j);
            if c != 0.0 {
                axpy(-c, &done[i * rows..(i + 1) * rows], xj);
            }
        }
        let d = r.diag(j);
        xj.iter_mut().for_each(|e| *e /= d);
    }
    Ok(x)
}

/// Singular values in descending order. Tall inputs are reduced with a
/// Householder QR first so only a `cols x cols` SVD is needed.
pub fn singular_values(a: MatRef<'_>) -> Vec<f64> {
    if a.rows() == 0 || a.cols() == 0 {
        return Vec::new();
    }
    let small = if a.rows() > a.cols() {
        householder_qr(&a.to_owned()).1.to_dense()
    } else {
        a.to_owned()
    };
    let m = DMatrix::from_column_slice(small.rows(), small.cols(), small.data());
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Largest singular value.
pub fn spectral_norm(a: MatRef<'_>) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}
