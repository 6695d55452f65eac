//! Compressed sparse row storage for the coefficient operator and the
//! Count sketch.

use crate::dense::{DenseMatrix, MatRef};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Validates raw CSR arrays. Column indices inside a row need not be
    /// sorted; products accumulate them in stored order.
    pub fn new(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != nrows + 1 {
            return Err(Error::Dimension(format!(
                "row_ptr has length {} for {} rows",
                row_ptr.len(),
                nrows
            )));
        }
        if row_ptr[0] != 0 || row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Dimension(
                "row_ptr must start at 0 and be nondecreasing".into(),
            ));
        }
        if row_ptr[nrows] != values.len() || col_idx.len() != values.len() {
            return Err(Error::Dimension(format!(
                "row_ptr ends at {} but there are {} values and {} column indices",
                row_ptr[nrows],
                values.len(),
                col_idx.len()
            )));
        }
        if let Some(&bad) = col_idx.iter().find(|&&c| c >= ncols) {
            return Err(Error::Dimension(format!(
                "column index {bad} out of range for {ncols} columns"
            )));
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Canonical CSR from `(row, col, value)` triplets: columns sorted within
    /// each row and duplicates summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        for &(i, j, _) in &sorted {
            if i >= nrows || j >= ncols {
                return Err(Error::Dimension(format!(
                    "entry ({i}, {j}) outside a {nrows}x{ncols} matrix"
                )));
            }
        }
        sorted.sort_by_key(|a| (a.0, a.1));

        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self::new(nrows, ncols, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates `(col, value)` over the stored entries of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    /// `y = A x`.
    pub fn spmv(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.spmv_into(x, &mut y);
        y
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols, "spmv input length");
        assert_eq!(y.len(), self.nrows, "spmv output length");
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// `S V`, computed column by column with the same row order as `spmv`.
    pub fn spmm<'a>(&self, v: impl Into<MatRef<'a>>) -> DenseMatrix {
        let v = v.into();
        assert_eq!(v.rows(), self.ncols, "spmm inner dimension");
        let mut out = DenseMatrix::zeros(self.nrows, v.cols());
        for c in 0..v.cols() {
            self.spmv_into(v.col(c), out.col_mut(c));
        }
        out
    }

    /// `S^T V` without forming the transpose.
    pub fn spmm_transpose<'a>(&self, v: impl Into<MatRef<'a>>) -> DenseMatrix {
        let v = v.into();
        assert_eq!(v.rows(), self.nrows, "spmm_transpose inner dimension");
        let mut out = DenseMatrix::zeros(self.ncols, v.cols());
        for c in 0..v.cols() {
            let x = v.col(c);
            let y = out.col_mut(c);
            for (i, &xi) in x.iter().enumerate() {
                if xi != 0.0 {
                    for (j, a) in self.row(i) {
                        y[j] += a * xi;
                    }
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> CsrMatrix {
        let triplets: Vec<_> = (0..self.nrows)
            .flat_map(|i| self.row(i).map(move |(j, v)| (j, i, v)))
            .collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, &triplets)
            .expect("transpose of a valid matrix is valid")
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                d[(i, j)] += v;
            }
        }
        d
    }

    /// Frobenius norm of the stored entries.
    pub fn norm_fro(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Right preconditioner applied inside the matrix powers kernel.
pub trait Preconditioner {
    fn apply(&self, x: &[f64]) -> Vec<f64>;
}

/// `M = I`; the only preconditioner shipped.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}
