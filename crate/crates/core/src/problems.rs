//! Synthetic test problems: glued panel matrices and Laplace stencils.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dense::{householder_qr, DenseMatrix};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Tall matrix of `num_panels` panels of `panel_width` columns where every
/// panel has condition number `kappa_panel` and the whole matrix roughly
/// `kappa_global`.
///
/// Panel `k` is `F_k diag(sigma) Z_k^T` with log-spaced `sigma` spanning
/// `kappa_panel`, a random orthogonal `Z_k` and an orthonormal frame `F_k`
/// taken from a shared random basis `U`. When `kappa_global > kappa_panel`
/// the first frame vector of panel `k > 0` is tilted towards a frame vector
/// of panel `k - 1` by an angle that shrinks geometrically, so the last
/// panel is nearly dependent on its predecessor at the `1/kappa_global`
/// level.
pub fn gen_glued(
    n: usize,
    num_panels: usize,
    panel_width: usize,
    kappa_panel: f64,
    kappa_global: f64,
    seed: u64,
) -> Result<DenseMatrix> {
    let total = num_panels * panel_width;
    if total == 0 || n < total {
        return Err(Error::InvalidConfig(format!(
            "glued matrix needs 0 < panels*width <= n, got {num_panels}*{panel_width} with n={n}"
        )));
    }
    if !(kappa_panel >= 1.0 && kappa_global >= kappa_panel) {
        return Err(Error::InvalidConfig(format!(
            "need 1 <= kappa_panel <= kappa_global, got {kappa_panel:e} and {kappa_global:e}"
        )));
    }
    if panel_width == 1 && kappa_panel > 1.0 {
        return Err(Error::InvalidConfig(
            "a width-1 panel always has condition number 1".into(),
        ));
    }
    let tilt = kappa_global > kappa_panel;
    if tilt && num_panels == 1 {
        return Err(Error::InvalidConfig(
            "a single panel cannot have a global condition number above its own".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (u, _) = householder_qr(&normal_matrix(&mut rng, n, total));
    let log_kp = kappa_panel.log10();
    let sigma: Vec<f64> = (0..panel_width)
        .map(|j| {
            let t = if panel_width > 1 {
                j as f64 / (panel_width - 1) as f64
            } else {
                0.0
            };
            10f64.powf(-log_kp * t)
        })
        .collect();

    let mut out = DenseMatrix::zeros(n, total);
    for k in 0..num_panels {
        let mut frame = u.block(0..n, k * panel_width..(k + 1) * panel_width);
        if tilt && k > 0 {
            let decay = -kappa_global.log10() * k as f64 / (num_panels - 1) as f64;
            let theta = (2.0 * 10f64.powf(decay)).min(std::f64::consts::FRAC_PI_2);
            let prev = u.col((k - 1) * panel_width + 1.min(panel_width - 1));
            let own = u.col(k * panel_width);
            for (i, e) in frame.col_mut(0).iter_mut().enumerate() {
                *e = theta.cos() * prev[i] + theta.sin() * own[i];
            }
        }
        for (j, s) in sigma.iter().enumerate() {
            frame.col_mut(j).iter_mut().for_each(|e| *e *= s);
        }
        let (z, _) = householder_qr(&normal_matrix(&mut rng, panel_width, panel_width));
        out.set_block(0, k * panel_width, &frame.mul(&z.transpose()));
    }
    Ok(out)
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// 5-point Dirichlet Laplacian on a `k x k` grid.
pub fn laplace_2d(k: usize) -> Result<CsrMatrix> {
    if k < 2 {
        return Err(Error::InvalidConfig("grid size must be at least 2".into()));
    }
    let n = k * k;
    let idx = |x: usize, y: usize| y * k + x;
    let mut t = Vec::with_capacity(5 * n);
    for y in 0..k {
        for x in 0..k {
            let i = idx(x, y);
            t.push((i, i, 4.0));
            if x > 0 {
                t.push((i, idx(x - 1, y), -1.0));
            }
            if x + 1 < k {
                t.push((i, idx(x + 1, y), -1.0));
            }
            if y > 0 {
                t.push((i, idx(x, y - 1), -1.0));
            }
            if y + 1 < k {
                t.push((i, idx(x, y + 1), -1.0));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &t)
}

/// 7-point Dirichlet Laplacian on a `k x k x k` grid.
pub fn laplace_3d(k: usize) -> Result<CsrMatrix> {
    if k < 2 {
        return Err(Error::InvalidConfig("grid size must be at least 2".into()));
    }
    let n = k * k * k;
    let idx = |x: usize, y: usize, z: usize| (z * k + y) * k + x;
    let mut t = Vec::with_capacity(7 * n);
    for z in 0..k {
        for y in 0..k {
            for x in 0..k {
                let i = idx(x, y, z);
                t.push((i, i, 6.0));
                let mut nb = |j| t.push((i, j, -1.0));
                if x > 0 {
                    nb(idx(x - 1, y, z));
                }
                if x + 1 < k {
                    nb(idx(x + 1, y, z));
                }
                if y > 0 {
                    nb(idx(x, y - 1, z));
                }
                if y + 1 < k {
                    nb(idx(x, y + 1, z));
                }
                if z > 0 {
                    nb(idx(x, y, z - 1));
                }
                if z + 1 < k {
                    nb(idx(x, y, z + 1));
                }
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &t)
}

/// Seeded i.i.d. standard normal matrix.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `U diag(logspace(0, -log10(kappa))) W^T` with random orthonormal `U`, `W`.
pub fn matrix_with_condition(rows: usize, cols: usize, kappa: f64, seed: u64) -> DenseMatrix {
    let (u, _) = householder_qr(&gaussian_matrix(rows, cols, seed));
    let (w, _) = householder_qr(&gaussian_matrix(cols, cols, seed.wrapping_add(1)));
    let mut us = u;
    for j in 0..cols {
        let t = if cols > 1 {
            j as f64 / (cols - 1) as f64
        } else {
            0.0
        };
        let s = kappa.powf(-t);
        us.col_mut(j).iter_mut().for_each(|e| *e *= s);
    }
    us.mul(&w.transpose())
}
