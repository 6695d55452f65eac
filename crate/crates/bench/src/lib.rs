//! Shared fixtures for the kernel benchmarks.

use sstep_core::{laplace_2d, CsrMatrix, DenseMatrix};

/// Glued-style panel of `cols` columns with condition number `kappa`.
pub fn panel(rows: usize, cols: usize, kappa: f64, seed: u64) -> DenseMatrix {
    sstep_core::problems::matrix_with_condition(rows, cols, kappa, seed)
}

/// 5-point Laplacian on a `grid x grid` mesh.
pub fn laplacian(grid: usize) -> CsrMatrix {
    laplace_2d(grid).expect("grid of at least two points")
}
