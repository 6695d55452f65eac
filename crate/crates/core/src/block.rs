//! Inter-block orthogonalization (BCGS, BCGS2, BCGS-PIP, RandBCGS) and the
//! two-stage orchestrator.
//!
//! A [`BasisStore`] accumulates panels `V_1, V_2, ...` and maintains
//! `[V_1, V_2, ...] = Q R` with `R` upper triangular. Columns from
//! `big_start()` onwards may be preprocessed rather than orthonormal while a
//! two-stage big panel is open.

use std::ops::Range;

use crate::dense::{
    apply_inv_upper, householder_qr, inner_products, DenseMatrix, MatRef, UpperTriangular,
};
use crate::error::{Error, Result};
use crate::intra::{cholqr, cholqr2, rand_cholqr, QrFactors};
use crate::ledger::{ReduceLedger, ReducePhase};
use crate::sketch::{apply_sketch, SketchOperator};

#[derive(Debug, Clone)]
pub struct BasisStore {
    n: usize,
    q: DenseMatrix,
    r: DenseMatrix,
    cols: usize,
    panel_offsets: Vec<usize>,
    big_start: usize,
    sketched: Option<DenseMatrix>,
    coords: DenseMatrix,
    ledger: ReduceLedger,
}

impl BasisStore {
    pub fn new(n: usize, capacity: usize) -> Self {
        Self {
            n,
            q: DenseMatrix::zeros(n, capacity),
            r: DenseMatrix::zeros(capacity, capacity),
            cols: 0,
            panel_offsets: Vec::new(),
            big_start: 0,
            sketched: None,
            coords: DenseMatrix::identity(capacity),
            ledger: ReduceLedger::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn capacity(&self) -> usize {
        self.q.cols()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `Q` restricted to the filled columns.
    pub fn basis(&self) -> MatRef<'_> {
        self.q.columns(0..self.cols)
    }

    pub fn column(&self, j: usize) -> &[f64] {
        assert!(j < self.cols);
        self.q.col(j)
    }

    /// Leading `cols x cols` block of `R`.
    pub fn r(&self) -> DenseMatrix {
        self.r.block(0..self.cols, 0..self.cols)
    }

    pub fn r_entry(&self, i: usize, j: usize) -> f64 {
        self.r[(i, j)]
    }

    /// Start offset of every panel pushed so far.
    pub fn panel_offsets(&self) -> &[usize] {
        &self.panel_offsets
    }

    /// First column of the open big panel; every earlier column is final.
    pub fn big_start(&self) -> usize {
        self.big_start
    }

    /// True once column `j` will no longer be modified.
    pub fn is_final(&self, j: usize) -> bool {
        j < self.big_start
    }

    /// Coordinates, in the final basis, of the vector that occupied column
    /// `j` before its big panel was finished. Equals `e_j` for columns that
    /// were never preprocessed.
    pub fn preprocessed_coords(&self, j: usize) -> Vec<f64> {
        self.coords.col(j)[..self.cols].to_vec()
    }

    pub fn ledger(&self) -> &ReduceLedger {
        &self.ledger
    }

    pub fn ledger_mut(&mut self) -> &mut ReduceLedger {
        &mut self.ledger
    }

    /// Sketch of the open big panel (`m_hat x (cols - big_start)`).
    pub fn sketched_basis(&self) -> Option<DenseMatrix> {
        self.sketched
            .as_ref()
            .map(|s| s.block(0..s.rows(), self.big_start..self.cols))
    }

    /// Drops every column; the ledger is kept.
    pub fn clear(&mut self) {
        self.cols = 0;
        self.big_start = 0;
        self.panel_offsets.clear();
        self.sketched = None;
        self.r = DenseMatrix::zeros(self.capacity(), self.capacity());
        self.coords = DenseMatrix::identity(self.capacity());
    }

    /// Drops columns `cols..` (used after a lucky breakdown).
    pub fn truncate(&mut self, cols: usize) {
        assert!(cols <= self.cols);
        for j in cols..self.cols {
            self.q.col_mut(j).iter_mut().for_each(|e| *e = 0.0);
            self.r.col_mut(j).iter_mut().for_each(|e| *e = 0.0);
        }
        self.cols = cols;
        self.panel_offsets.retain(|&o| o < cols);
        self.big_start = self.big_start.min(cols);
    }

    fn check_panel(&self, v: MatRef<'_>) -> Result<()> {
        if v.rows() != self.n {
            return Err(Error::Dimension(format!(
                "panel has {} rows, basis has {}",
                v.rows(),
                self.n
            )));
        }
        if self.cols + v.cols() > self.capacity() {
            return Err(Error::Dimension(format!(
                "panel of {} columns overflows basis capacity {}",
                v.cols(),
                self.capacity()
            )));
        }
        Ok(())
    }

    /// Appends `q_new` with `V_j = Q[:, rows] r_top + q_new r_jj`.
    fn append(&mut self, q_new: &DenseMatrix, r_top: &DenseMatrix, r_jj: &UpperTriangular) {
        let start = self.cols;
        let w = q_new.cols();
        debug_assert_eq!(r_top.rows(), start);
        self.q.set_columns(start, q_new.view());
        self.r.set_block(0, start, r_top);
        self.r.set_block(start, start, &r_jj.to_dense());
        self.panel_offsets.push(start);
        self.cols += w;
    }
}

/// `R_top = Q[:, range]^T V` (one reduce when the range is nonempty) and
/// `V - Q[:, range] R_top`.
fn project_range(
    store: &mut BasisStore,
    v: MatRef<'_>,
    range: Range<usize>,
) -> (DenseMatrix, DenseMatrix) {
    if range.is_empty() {
        return (v.to_owned(), DenseMatrix::zeros(0, v.cols()));
    }
    let basis = store.q.columns(range);
    let coeffs = inner_products(basis, v, &mut store.ledger, ReducePhase::Projection);
    let mut out = v.to_owned();
    out.sub_mul(basis, &coeffs);
    (out, coeffs)
}

/// One block classical Gram-Schmidt projection against every stored column.
pub fn bcgs_project<'a>(
    store: &mut BasisStore,
    v: impl Into<MatRef<'a>>,
) -> (DenseMatrix, DenseMatrix) {
    let cols = store.cols;
    project_range(store, v.into(), 0..cols)
}

/// Intra-block routine used inside BCGS2.
#[derive(Debug, Clone, Copy)]
pub enum IntraKind<'a> {
    CholQr,
    CholQr2,
    RandCholQr(&'a SketchOperator),
}

fn run_intra(intra: IntraKind<'_>, v: MatRef<'_>, ledger: &mut ReduceLedger) -> Result<QrFactors> {
    match intra {
        IntraKind::CholQr => cholqr(v, ledger),
        IntraKind::CholQr2 => cholqr2(v, ledger),
        IntraKind::RandCholQr(theta) => rand_cholqr(v, theta, ledger),
    }
}

/// BCGS twice. For the first block only the intra routine runs; afterwards
/// project, intra, re-project, CholQR.
pub fn bcgs2<'a>(
    store: &mut BasisStore,
    v: impl Into<MatRef<'a>>,
    intra: IntraKind<'_>,
) -> Result<()> {
    let v = v.into();
    store.check_panel(v)?;
    let prior = store.cols;
    if prior == 0 {
        let f = run_intra(intra, v, &mut store.ledger)?;
        store.append(&f.q, &DenseMatrix::zeros(0, v.cols()), &f.r);
        store.big_start = store.cols;
        return Ok(());
    }
    let (projected, r1) = project_range(store, v, 0..prior);
    let first = run_intra(intra, projected.view(), &mut store.ledger)?;
    let (reprojected, r2) = project_range(store, first.q.view(), 0..prior);
    let second = cholqr(&reprojected, &mut store.ledger)?;

    let mut r_top = r1;
    r_top.add_assign(&first.r.right_mul(&r2));
    let r_jj = second.r.mul(&first.r);
    store.append(&second.q, &r_top, &r_jj);
    store.big_start = store.cols;
    Ok(())
}

/// BCGS with the Pythagorean inner product: a single fused reduce forms
/// `[P, V]^T V` against the open big panel `P`, and the Gram matrix of the
/// projected block is `V^T V - R_top^T R_top`.
pub fn bcgs_pip<'a>(store: &mut BasisStore, v: impl Into<MatRef<'a>>) -> Result<()> {
    let v = v.into();
    store.check_panel(v)?;
    pip_within(store, v, DenseMatrix::zeros(store.big_start, v.cols()))
}

fn pip_within(store: &mut BasisStore, v: MatRef<'_>, outer: DenseMatrix) -> Result<()> {
    let range = store.big_start..store.cols;
    store.ledger.record(ReducePhase::Gram);
    let w = v.cols();
    let d = v.t_mul(v);
    let (inner, g) = if range.is_empty() {
        (DenseMatrix::zeros(0, w), d)
    } else {
        let c = store.q.columns(range.clone()).t_mul(v);
        let mut g = d;
        let ctc = c.t_mul(&c);
        g = g.sub(&ctc);
        (c, g)
    };
    let r_jj = crate::dense::cholesky(&g)?;
    let mut projected = v.to_owned();
    if !range.is_empty() {
        projected.sub_mul(store.q.columns(range.clone()), &inner);
    }
    let q_new = apply_inv_upper(projected.view(), &r_jj)?;
    let r_top = stack_rows(&outer, &inner);
    store.append(&q_new, &r_top, &r_jj);
    Ok(())
}

fn stack_rows(top: &DenseMatrix, bottom: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(top.rows() + bottom.rows(), top.cols());
    out.set_block(0, 0, top);
    out.set_block(top.rows(), 0, bottom);
    out
}

/// Randomized BCGS preprocessing of `V` against the open big panel: sketch,
/// BCGS2 with Householder QR on the sketches, then apply the resulting
/// triangular factors to the full-length vectors. One reduce.
pub fn rand_bcgs_preproc<'a>(
    store: &mut BasisStore,
    v: impl Into<MatRef<'a>>,
    theta: &SketchOperator,
) -> Result<()> {
    let v = v.into();
    store.check_panel(v)?;
    randbcgs_within(
        store,
        v,
        theta,
        DenseMatrix::zeros(store.big_start, v.cols()),
    )
}

fn randbcgs_within(
    store: &mut BasisStore,
    v: MatRef<'_>,
    theta: &SketchOperator,
    outer: DenseMatrix,
) -> Result<()> {
    let m_hat = theta.sketch_dim();
    let range = store.big_start..store.cols;
    if m_hat < range.len() + v.cols() {
        return Err(Error::Dimension(format!(
            "sketch size {m_hat} cannot hold {} sketched columns",
            range.len() + v.cols()
        )));
    }
    if store.sketched.as_ref().is_none_or(|s| s.rows() != m_hat) {
        if !range.is_empty() {
            return Err(Error::InvalidConfig(
                "sketch changed inside an open big panel".into(),
            ));
        }
        store.sketched = Some(DenseMatrix::zeros(m_hat, store.capacity()));
    }
    let sketched_v = apply_sketch(theta, v, &mut store.ledger)?;
    let sketched_prev = store
        .sketched
        .as_ref()
        .expect("initialized above")
        .block(0..m_hat, range.clone());
    let (q_s, inner, r_jj) = bcgs2_householder(&sketched_prev, &sketched_v);

    let mut projected = v.to_owned();
    if !range.is_empty() {
        projected.sub_mul(store.q.columns(range.clone()), &inner);
    }
    let q_new = apply_inv_upper(projected.view(), &r_jj)?;
    let start = store.cols;
    store
        .sketched
        .as_mut()
        .expect("initialized above")
        .set_block(0, start, &q_s);
    let r_top = stack_rows(&outer, &inner);
    store.append(&q_new, &r_top, &r_jj);
    Ok(())
}

/// BCGS2 on small sketched data with Householder QR as the intra routine.
/// Returns `(q, r_top, r_jj)` with `v = p r_top + q r_jj`.
fn bcgs2_householder(
    p: &DenseMatrix,
    v: &DenseMatrix,
) -> (DenseMatrix, DenseMatrix, UpperTriangular) {
    if p.cols() == 0 {
        let (q, r) = householder_qr(v);
        return (q, DenseMatrix::zeros(0, v.cols()), r);
    }
    let c1 = p.t_mul(v);
    let mut w = v.clone();
    w.sub_mul(p.view(), &c1);
    let (q1, t1) = householder_qr(&w);
    let c2 = p.t_mul(&q1);
    let mut w2 = q1;
    w2.sub_mul(p.view(), &c2);
    let (q2, t2) = householder_qr(&w2);
    let mut r_top = c1;
    r_top.add_assign(&t1.right_mul(&c2));
    (q2, r_top, t2.mul(&t1))
}

/// Preprocessing applied to each panel of a big panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preprocess {
    Pip,
    RandBcgs,
}

/// Two-stage block orthogonalization: panels are cheaply preprocessed as
/// they arrive and each big panel is orthogonalized once it is complete.
#[derive(Debug, Clone, Copy)]
pub struct TwoStage<'a> {
    pub preproc: Preprocess,
    pub sketch: Option<&'a SketchOperator>,
    /// Re-orthogonalize a finished big panel against earlier big panels.
    pub reorthogonalize: bool,
}

impl<'a> TwoStage<'a> {
    pub fn new(preproc: Preprocess, sketch: Option<&'a SketchOperator>) -> Self {
        Self {
            preproc,
            sketch,
            reorthogonalize: true,
        }
    }

    /// Projects `v` against earlier big panels, then preprocesses it inside
    /// the open big panel.
    pub fn push_panel<'v>(&self, store: &mut BasisStore, v: impl Into<MatRef<'v>>) -> Result<()> {
        let v = v.into();
        store.check_panel(v)?;
        let l = store.big_start;
        let (projected, outer) = project_range(store, v, 0..l);
        match self.preproc {
            Preprocess::Pip => pip_within(store, projected.view(), outer),
            Preprocess::RandBcgs => {
                let theta = self.sketch.ok_or_else(|| {
                    Error::InvalidConfig("randomized preprocessing needs a sketch".into())
                })?;
                randbcgs_within(store, projected.view(), theta, outer)
            }
        }
    }

    /// CholQR of the open big panel, followed by BCGS + CholQR against the
    /// earlier big panels when there are any.
    pub fn finish_big_panel(&self, store: &mut BasisStore) -> Result<()> {
        let b0 = store.big_start;
        let b1 = store.cols;
        if b0 == b1 {
            return Ok(());
        }
        let big = store.q.columns(b0..b1).to_owned();
        let first = cholqr(&big, &mut store.ledger)?;
        let r_bb = store.r.block(b0..b1, b0..b1);
        let mut new_r_bb = first.r.to_dense().mul(&r_bb);
        // q_hat = Q_prev * top + Q_big * bottom
        let mut coords_top = DenseMatrix::zeros(b0, b1 - b0);
        let mut coords_bottom = first.r.to_dense();
        let mut q_big = first.q;

        if b0 > 0 && self.reorthogonalize {
            let (projected, s) = project_range(store, q_big.view(), 0..b0);
            let second = cholqr(&projected, &mut store.ledger)?;
            let mut r_top = store.r.block(0..b0, b0..b1);
            r_top.add_assign(&s.mul(&new_r_bb));
            store.r.set_block(0, b0, &r_top);
            new_r_bb = second.r.to_dense().mul(&new_r_bb);
            coords_top = s.mul(&coords_bottom);
            coords_bottom = second.r.to_dense().mul(&coords_bottom);
            q_big = second.q;
        }

        store.q.set_columns(b0, q_big.view());
        store.r.set_block(b0, b0, &new_r_bb);
        let mut coords = DenseMatrix::zeros(b1, b1 - b0);
        coords.set_block(0, 0, &coords_top);
        coords.set_block(b0, 0, &coords_bottom);
        store.coords.set_block(0, b0, &coords);
        store.big_start = b1;
        store.sketched = None;
        Ok(())
    }
}

/// Runs the two-stage scheme over `panels`, closing a big panel after every
/// `panels_per_big` panels and after the last one.
pub fn two_stage_cycle(
    store: &mut BasisStore,
    panels: &[DenseMatrix],
    scheme: &TwoStage<'_>,
    panels_per_big: usize,
) -> Result<()> {
    if panels_per_big == 0 {
        return Err(Error::InvalidConfig(
            "a big panel needs at least one panel".into(),
        ));
    }
    for (i, v) in panels.iter().enumerate() {
        scheme.push_panel(store, v)?;
        if (i + 1) % panels_per_big == 0 || i + 1 == panels.len() {
            scheme.finish_big_panel(store)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::cholesky;
    use crate::metrics::{condition_number, orthogonality_error};
    use crate::problems::gen_glued;
    use crate::sketch::{build_sketch, SketchKind};
    use crate::testutil::{gaussian_matrix, with_condition};

    fn panels_of(v: &DenseMatrix, width: usize) -> Vec<DenseMatrix> {
        (0..v.cols() / width)
            .map(|k| v.columns(k * width..(k + 1) * width).to_owned())
            .collect()
    }

    fn factor_error(store: &BasisStore, v: &DenseMatrix) -> f64 {
        store.basis().mul(&store.r()).sub(v).norm_fro() / v.norm_fro()
    }

    #[test]
    fn projection_against_empty_basis() {
        let mut store = BasisStore::new(50, 10);
        let v = gaussian_matrix(50, 3, 1);
        let (out, r) = bcgs_project(&mut store, &v);
        assert_eq!(out, v);
        assert_eq!(r.rows(), 0);
        assert_eq!(store.ledger().total(), 0);
    }

    #[test]
    fn projection_removes_contained_panel() {
        let mut store = BasisStore::new(80, 10);
        bcgs2(&mut store, &gaussian_matrix(80, 4, 2), IntraKind::CholQr2).unwrap();
        let c = gaussian_matrix(4, 2, 3);
        let v = store.basis().mul(&c);
        let (out, _) = bcgs_project(&mut store, &v);
        assert!(out.norm_fro() <= 1e-13 * v.norm_fro());
    }

    #[test]
    fn projection_matches_classical_gram_schmidt() {
        let mut store = BasisStore::new(100, 10);
        bcgs2(&mut store, &gaussian_matrix(100, 5, 4), IntraKind::CholQr2).unwrap();
        let v = gaussian_matrix(100, 3, 5);
        let (out, r) = bcgs_project(&mut store, &v);
        for c in 0..3 {
            let mut x = v.col(c).to_vec();
            for k in 0..5 {
                let qk = store.column(k);
                let coeff: f64 = qk.iter().zip(v.col(c)).map(|(a, b)| a * b).sum();
                assert!((coeff - r[(k, c)]).abs() <= 1e-13);
                x.iter_mut().zip(qk).for_each(|(xi, qi)| *xi -= coeff * qi);
            }
            for (a, b) in x.iter().zip(out.col(c)) {
                assert!((a - b).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn bcgs2_first_block_equals_intra() {
        let v = with_condition(200, 4, 1e3, 6);
        let mut store = BasisStore::new(200, 8);
        bcgs2(&mut store, &v, IntraKind::CholQr2).unwrap();
        let f = cholqr2(&v, &mut ReduceLedger::new()).unwrap();
        assert_eq!(store.basis().to_owned(), f.q);
        assert_eq!(store.r(), f.r.to_dense());
        assert_eq!(store.ledger().total(), 2);
    }

    #[test]
    fn bcgs2_uses_five_reduces_per_later_block() {
        let v = gen_glued(2000, 3, 5, 1e3, 1e3, 7).unwrap();
        let theta = build_sketch(SketchKind::Gaussian, 2000, 5, 1).unwrap();
        for intra in [IntraKind::CholQr2, IntraKind::RandCholQr(&theta)] {
            let mut store = BasisStore::new(2000, 15);
            let panels = panels_of(&v, 5);
            bcgs2(&mut store, &panels[0], intra).unwrap();
            for p in &panels[1..] {
                let before = store.ledger().total();
                bcgs2(&mut store, p, intra).unwrap();
                assert_eq!(store.ledger().total() - before, 5);
            }
        }
    }

    #[test]
    fn bcgs2_glued_panels() {
        let v = gen_glued(10_000, 12, 5, 1e6, 1e6, 8).unwrap();
        let mut store = BasisStore::new(10_000, 60);
        for p in panels_of(&v, 5) {
            bcgs2(&mut store, &p, IntraKind::CholQr2).unwrap();
        }
        assert!(orthogonality_error(store.basis()) <= 1e-13);
        assert!(factor_error(&store, &v) <= 1e-10);
    }

    #[test]
    fn pip_first_block_equals_cholqr() {
        let v = with_condition(300, 5, 1e2, 9);
        let mut store = BasisStore::new(300, 5);
        bcgs_pip(&mut store, &v).unwrap();
        let f = cholqr(&v, &mut ReduceLedger::new()).unwrap();
        assert_eq!(store.basis().to_owned(), f.q);
        assert_eq!(store.ledger().total(), 1);
    }

    #[test]
    fn pip_matches_project_then_cholqr() {
        let v = with_condition(2000, 11, 10.0, 10);
        let mut pip = BasisStore::new(2000, 11);
        bcgs_pip(&mut pip, v.columns(0..6)).unwrap();
        bcgs_pip(&mut pip, v.columns(6..11)).unwrap();
        assert_eq!(pip.ledger().total(), 2);

        let mut ledger = ReduceLedger::new();
        let f1 = cholqr(v.columns(0..6), &mut ledger).unwrap();
        let c = f1.q.view().t_mul(v.columns(6..11));
        let mut projected = v.columns(6..11).to_owned();
        projected.sub_mul(f1.q.view(), &c);
        let f2 = cholqr(&projected, &mut ledger).unwrap();
        let oracle = DenseMatrix::hstack(&[f1.q.view(), f2.q.view()]);
        assert!(pip.basis().to_owned().sub(&oracle).max_abs() <= 1e-10);
    }

    #[test]
    fn randbcgs_first_panel_is_sketched_preconditioning() {
        let v = with_condition(3000, 6, 1e8, 11);
        let theta = build_sketch(SketchKind::Gaussian, 3000, 5, 2).unwrap();
        let mut store = BasisStore::new(3000, 6);
        rand_bcgs_preproc(&mut store, &v, &theta).unwrap();
        assert_eq!(store.ledger().total(), 1);
        let (_, r1) = householder_qr(&theta.project(&v).unwrap());
        let oracle = apply_inv_upper(v.view(), &r1).unwrap();
        assert_eq!(store.basis().to_owned(), oracle);
    }

    #[test]
    fn randbcgs_keeps_sketched_basis_orthonormal() {
        let v = gen_glued(10_000, 12, 5, 1e3, 1e15, 12).unwrap();
        let theta = build_sketch(SketchKind::Gaussian, 10_000, 60, 3).unwrap();
        let mut store = BasisStore::new(10_000, 60);
        for p in panels_of(&v, 5) {
            rand_bcgs_preproc(&mut store, &p, &theta).unwrap();
            let sk = store.sketched_basis().unwrap();
            assert!(orthogonality_error(&sk) <= 1e-14);
        }
        let kappa = condition_number(store.basis()).unwrap();
        assert!(kappa <= 100.0, "{kappa:e}");
    }

    #[test]
    fn two_stage_with_single_panel_big_panels() {
        let v = gen_glued(3000, 6, 4, 1e2, 1e2, 13).unwrap();
        for preproc in [Preprocess::Pip, Preprocess::RandBcgs] {
            let theta = build_sketch(SketchKind::Gaussian, 3000, 4, 4).unwrap();
            let scheme = TwoStage::new(preproc, Some(&theta));
            let mut store = BasisStore::new(3000, 24);
            two_stage_cycle(&mut store, &panels_of(&v, 4), &scheme, 1).unwrap();
            assert!(orthogonality_error(store.basis()) <= 1e-13);
            assert!(factor_error(&store, &v) <= 1e-10);
        }
    }

    #[test]
    fn two_stage_randbcgs_on_hard_big_panels() {
        let big: Vec<DenseMatrix> = (0..3)
            .map(|b| gen_glued(10_000, 12, 5, 1e3, 1e15, 20 + b).unwrap())
            .collect();
        let v = DenseMatrix::hstack(&[big[0].view(), big[1].view(), big[2].view()]);
        let theta = build_sketch(SketchKind::Gaussian, 10_000, 60, 5).unwrap();
        let scheme = TwoStage::new(Preprocess::RandBcgs, Some(&theta));
        let mut store = BasisStore::new(10_000, 180);
        two_stage_cycle(&mut store, &panels_of(&v, 5), &scheme, 12).unwrap();
        assert!(orthogonality_error(store.basis()) <= 1e-13);
        assert!(factor_error(&store, &v) <= 1e-10);
    }

    #[test]
    fn two_stage_pip_fails_on_hard_big_panel() {
        let v = gen_glued(10_000, 12, 5, 1e3, 1e15, 30).unwrap();
        let scheme = TwoStage::new(Preprocess::Pip, None);
        let mut store = BasisStore::new(10_000, 60);
        match two_stage_cycle(&mut store, &panels_of(&v, 5), &scheme, 12) {
            Err(e) => assert!(e.is_breakdown()),
            Ok(()) => assert!(orthogonality_error(store.basis()) > 1e-4),
        }
    }

    #[test]
    fn preprocessed_coordinates_reproduce_old_columns() {
        let v = with_condition(1500, 12, 1e4, 14);
        let theta = build_sketch(SketchKind::Gaussian, 1500, 6, 6).unwrap();
        let scheme = TwoStage::new(Preprocess::RandBcgs, Some(&theta));
        let mut store = BasisStore::new(1500, 12);
        scheme.push_panel(&mut store, v.columns(0..3)).unwrap();
        scheme.push_panel(&mut store, v.columns(3..6)).unwrap();
        scheme.finish_big_panel(&mut store).unwrap();
        scheme.push_panel(&mut store, v.columns(6..9)).unwrap();
        scheme.push_panel(&mut store, v.columns(9..12)).unwrap();
        let before: Vec<Vec<f64>> = (6..12).map(|j| store.column(j).to_vec()).collect();
        assert!(!store.is_final(8));
        scheme.finish_big_panel(&mut store).unwrap();
        assert!(store.is_final(8));
        for (k, j) in (6..12).enumerate() {
            let c = store.preprocessed_coords(j);
            let rebuilt = store.basis().mul(&DenseMatrix::from_col_major(12, 1, c));
            let diff: f64 = rebuilt
                .col(0)
                .iter()
                .zip(&before[k])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(diff <= 1e-12, "column {j}: {diff:e}");
        }

        let mut plain = BasisStore::new(1500, 12);
        bcgs2(&mut plain, v.columns(0..3), IntraKind::CholQr2).unwrap();
        assert_eq!(plain.preprocessed_coords(1), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn two_stage_ledger_with_one_big_panel() {
        let (m, s) = (20, 5);
        let v = with_condition(2000, m + 1, 1e3, 15);
        let theta = build_sketch(SketchKind::Gaussian, 2000, m, 7).unwrap();
        let mut panels = vec![v.columns(0..s + 1).to_owned()];
        for k in 1..m / s {
            panels.push(v.columns(1 + k * s..1 + (k + 1) * s).to_owned());
        }
        for preproc in [Preprocess::Pip, Preprocess::RandBcgs] {
            let scheme = TwoStage::new(preproc, Some(&theta));
            let mut store = BasisStore::new(2000, m + 1);
            two_stage_cycle(&mut store, &panels, &scheme, m / s).unwrap();
            assert_eq!(store.ledger().total(), (m / s + 1) as u64);
        }
    }

    #[test]
    fn weyl_step_bounds_condition() {
        for kappa in [1e2, 1e5, 1e9] {
            let v = gen_glued(4000, 4, 5, kappa, kappa, 16).unwrap();
            let theta = build_sketch(SketchKind::Gaussian, 4000, 20, 8).unwrap();
            let mut store = BasisStore::new(4000, 20);
            for p in panels_of(&v, 5) {
                rand_bcgs_preproc(&mut store, &p, &theta).unwrap();
            }
            let err = orthogonality_error(store.basis());
            if err <= 0.5 {
                assert!(condition_number(store.basis()).unwrap() <= 3f64.sqrt());
            }
        }
    }

    #[test]
    fn pip_gram_is_pythagorean() {
        let v = with_condition(500, 8, 10.0, 17);
        let mut store = BasisStore::new(500, 8);
        bcgs_pip(&mut store, v.columns(0..4)).unwrap();
        let p = store.basis().to_owned();
        let c = p.view().t_mul(v.columns(4..8));
        let mut projected = v.columns(4..8).to_owned();
        projected.sub_mul(p.view(), &c);
        let direct = cholesky(&projected.t_mul(&projected)).unwrap();
        bcgs_pip(&mut store, v.columns(4..8)).unwrap();
        let got = store.r().block(4..8, 4..8);
        assert!(got.sub(&direct.to_dense()).max_abs() <= 1e-12 * v.norm_fro());
    }
}
