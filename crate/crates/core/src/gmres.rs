//! Restarted s-step GMRES with a monomial matrix powers kernel.
//!
//! Each restart cycle builds `m + 1` basis vectors panel by panel. Every
//! panel is generated from the last basis vector available when it starts,
//! orthogonalized by the configured scheme, and the Hessenberg matrix is
//! recovered afterwards from the triangular factors.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::block::{bcgs2, BasisStore, IntraKind, Preprocess, TwoStage};
use crate::dense::{apply_inv_upper, dot, norm2, spectral_norm, DenseMatrix, UpperTriangular};
use crate::error::{Error, Result};
use crate::ledger::{ReduceLedger, ReducePhase};
use crate::metrics::orthogonality_error;
use crate::sketch::{build_sketch, SketchKind, SketchOperator};
use crate::sparse::{CsrMatrix, Preconditioner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Bcgs2CholQr2,
    Bcgs2RandCholQr,
    TwoStagePip,
    TwoStageRandBcgs,
    /// Column-wise CGS2, i.e. standard GMRES.
    StandardCgs2,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Bcgs2CholQr2,
        Scheme::Bcgs2RandCholQr,
        Scheme::TwoStagePip,
        Scheme::TwoStageRandBcgs,
        Scheme::StandardCgs2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Bcgs2CholQr2 => "bcgs2_cholqr2",
            Scheme::Bcgs2RandCholQr => "bcgs2_randcholqr",
            Scheme::TwoStagePip => "twostage_pip",
            Scheme::TwoStageRandBcgs => "twostage_randbcgs",
            Scheme::StandardCgs2 => "standard_cgs2",
        }
    }

    pub fn is_two_stage(self) -> bool {
        matches!(self, Scheme::TwoStagePip | Scheme::TwoStageRandBcgs)
    }

    pub fn uses_sketch(self) -> bool {
        matches!(self, Scheme::Bcgs2RandCholQr | Scheme::TwoStageRandBcgs)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase().replace('-', "_"))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheme `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub n: usize,
    /// Restart length.
    pub m: usize,
    /// Panel step size.
    pub s: usize,
    /// Big-panel size of the two-stage schemes.
    pub s_hat: usize,
    pub scheme: Scheme,
    pub sketch: SketchKind,
    pub rel_tol: f64,
    pub max_restarts: usize,
    pub seed: u64,
    /// Re-orthogonalize finished big panels against earlier ones.
    pub reorthogonalize: bool,
}

impl SolverConfig {
    /// Defaults: `s_hat = m` for two-stage schemes and `s` otherwise,
    /// Gaussian sketch, `rel_tol = 1e-6`, 200 restarts, seed 0.
    pub fn new(n: usize, m: usize, s: usize, scheme: Scheme) -> Self {
        Self {
            n,
            m,
            s,
            s_hat: if scheme.is_two_stage() { m } else { s },
            scheme,
            sketch: SketchKind::Gaussian,
            rel_tol: 1e-6,
            max_restarts: 200,
            seed: 0,
            reorthogonalize: true,
        }
    }

    /// `(s, s_hat)` actually used by the scheme.
    pub fn effective_steps(&self) -> (usize, usize) {
        match self.scheme {
            Scheme::StandardCgs2 => (1, 1),
            Scheme::Bcgs2CholQr2 | Scheme::Bcgs2RandCholQr => (self.s, self.s),
            Scheme::TwoStagePip | Scheme::TwoStageRandBcgs => (self.s, self.s_hat),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n == 0 {
            return bad("problem dimension must be positive".into());
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return bad(format!("rel_tol must lie in (0, 1), got {}", self.rel_tol));
        }
        let (s, s_hat) = self.effective_steps();
        let m = self.m;
        if s == 0 || s > s_hat || s_hat > m {
            return bad(format!(
                "need 1 <= s <= s_hat <= m, got s={s} s_hat={s_hat} m={m}"
            ));
        }
        if s_hat % s != 0 {
            return bad(format!("s={s} must divide s_hat={s_hat}"));
        }
        if !m.is_multiple_of(s_hat) {
            return bad(format!("s_hat={s_hat} must divide m={m}"));
        }
        if self.scheme.uses_sketch() && self.sketch == SketchKind::Identity {
            return bad("the identity sketch is a measurement control only".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveReport {
    pub converged: bool,
    /// Restart cycles run.
    pub restarts: usize,
    /// Krylov basis vectors used across all cycles.
    pub iterations: usize,
    pub final_rel_residual: f64,
    /// Relative true residual at the start of every cycle and at the end.
    pub residual_history: Vec<f64>,
    /// Relative least-squares residual predicted at the end of every cycle.
    pub estimated_residuals: Vec<f64>,
    pub ledger: ReduceLedger,
    /// `||I - Q^T Q||_2` of the final basis of every cycle.
    pub orthogonality_errors: Vec<f64>,
    /// `||A Q_k - Q_{k+1} H||_2 / ||A||_2` for every cycle.
    pub arnoldi_residuals: Vec<f64>,
    /// Set when orthogonalization failed and the solve stopped early.
    pub breakdown: Option<String>,
}

/// `[v, A v, ..., A^s v]`.
pub fn mpk(a: &CsrMatrix, v_start: &[f64], s: usize) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(v_start.len(), s + 1);
    out.col_mut(0).copy_from_slice(v_start);
    for k in 0..s {
        let next = a.spmv(out.col(k));
        out.col_mut(k + 1).copy_from_slice(&next);
    }
    out
}

/// `[v, A M^{-1} v, ..., (A M^{-1})^s v]`.
pub fn mpk_preconditioned(
    a: &CsrMatrix,
    m_inv: &dyn Preconditioner,
    v_start: &[f64],
    s: usize,
) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(v_start.len(), s + 1);
    out.col_mut(0).copy_from_slice(v_start);
    for k in 0..s {
        let next = a.spmv(&m_inv.apply(out.col(k)));
        out.col_mut(k + 1).copy_from_slice(&next);
    }
    out
}

/// Monomial change of basis: ones on the subdiagonal of an `(m+1) x m`
/// matrix, so that `A V_{1:m} = V_{1:m+1} T`.
pub fn change_of_basis(m: usize) -> DenseMatrix {
    let mut t = DenseMatrix::zeros(m + 1, m);
    for k in 0..m {
        t[(k + 1, k)] = 1.0;
    }
    t
}

/// `H = R_{1:m+1,1:m+1} T R_{1:m,1:m}^{-1}`.
pub fn build_hessenberg(r: &DenseMatrix, t: &DenseMatrix) -> Result<DenseMatrix> {
    let m = t.cols();
    if r.rows() != m + 1 || r.cols() != m + 1 || t.rows() != m + 1 {
        return Err(Error::Dimension(format!(
            "need an {0}x{0} factor and an {0}x{1} change of basis",
            m + 1,
            m
        )));
    }
    let rt = r.mul(t);
    let r_in = r.block(0..m, 0..m);
    build_hessenberg_from_coordinates(&rt, &r_in)
}

/// `H = C_out C_in^{-1}` where column `i` of `C_in` holds the coordinates of
/// the vector multiplied by `A` and column `i` of `C_out` the coordinates of
/// the product, both in the orthonormal basis.
pub fn build_hessenberg_from_coordinates(
    c_out: &DenseMatrix,
    c_in: &DenseMatrix,
) -> Result<DenseMatrix> {
    let k = c_in.cols();
    if c_in.rows() != k || c_out.cols() != k || c_out.rows() != k + 1 {
        return Err(Error::Dimension(format!(
            "coordinates must be {}x{k} and {k}x{k}",
            k + 1
        )));
    }
    apply_inv_upper(c_out.view(), &UpperTriangular::from_dense(c_in))
}

/// `y = argmin ||gamma e_1 - H y||_2` via Givens rotations, with the
/// minimum-norm solution when `H` is numerically rank deficient.
pub fn solve_lsq(h: &DenseMatrix, gamma: f64) -> (Vec<f64>, f64) {
    let (rows, k) = (h.rows(), h.cols());
    assert!(rows == k + 1, "Hessenberg matrix must be (k+1) x k");
    let mut r = h.clone();
    let mut g = vec![0.0; rows];
    g[0] = gamma;
    for j in 0..k {
        let (a, b) = (r[(j, j)], r[(j + 1, j)]);
        let rho = a.hypot(b);
        if rho == 0.0 {
            continue;
        }
        let (c, s) = (a / rho, b / rho);
        for col in j..k {
            let (x, y) = (r[(j, col)], r[(j + 1, col)]);
            r[(j, col)] = c * x + s * y;
            r[(j + 1, col)] = -s * x + c * y;
        }
        let (x, y) = (g[j], g[j + 1]);
        g[j] = c * x + s * y;
        g[j + 1] = -s * x + c * y;
    }

    let scale = r.max_abs();
    let rank_deficient = (0..k).any(|i| r[(i, i)].abs() <= 1e-14 * scale) || scale == 0.0;
    if rank_deficient {
        return min_norm_lsq(h, gamma);
    }
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| r[(i, j)] * y[j]).sum();
        y[i] = (g[i] - s) / r[(i, i)];
    }
    (y, g[k].abs())
}

fn min_norm_lsq(h: &DenseMatrix, gamma: f64) -> (Vec<f64>, f64) {
    let (rows, k) = (h.rows(), h.cols());
    let hm = DMatrix::from_column_slice(rows, k, h.data());
    let mut rhs = DVector::zeros(rows);
    rhs[0] = gamma;
    let svd = hm.clone().svd(true, true);
    let tol = 1e-14 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    let y = svd
        .solve(&rhs, tol)
        .map(|v| v.iter().copied().collect())
        .unwrap_or_else(|_| vec![0.0; k]);
    let yv = DVector::from_column_slice(&y);
    let res = (rhs - hm * yv).norm();
    (y, res)
}

/// Estimate of `||A||_2` from power iteration on `A^T A`.
pub fn operator_norm_estimate(a: &CsrMatrix) -> f64 {
    let at = a.transpose();
    let n = a.ncols();
    if n == 0 {
        return 0.0;
    }
    let mut x: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.1 * ((i * 7919 % 101) as f64 / 101.0))
        .collect();
    let mut lambda = 0.0;
    for _ in 0..200 {
        let nx = norm2(&x);
        if nx == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|e| *e /= nx);
        let y = at.spmv(&a.spmv(&x));
        let next = dot(&x, &y);
        x = y;
        if (next - lambda).abs() <= 1e-10 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda.max(0.0).sqrt()
}

/// Where the input vector of a basis column came from.
#[derive(Debug, Clone, Copy)]
enum Source {
    /// `A` times the raw vector pushed as column `j`.
    Raw(usize),
    /// `A` times the basis vector in column `j`, fetched while final or
    /// still preprocessed.
    Start { col: usize, was_final: bool },
}

struct Cycle<'a> {
    a: &'a CsrMatrix,
    store: BasisStore,
    sources: Vec<Source>,
    /// Coordinates of a final input that lies in the span of the basis.
    invariant: Option<Vec<f64>>,
    gamma: f64,
}

enum Outcome {
    Continue,
    Invariant,
}

impl<'a> Cycle<'a> {
    fn coordinates(&self, k: usize) -> (DenseMatrix, DenseMatrix) {
        let mut c_out = DenseMatrix::zeros(k + 1, k);
        let mut c_in = DenseMatrix::zeros(k, k);
        for i in 1..=k {
            if let (true, Some(coords)) = (i == k, self.invariant.as_ref()) {
                for (row, &v) in coords.iter().enumerate().take(k + 1) {
                    c_out[(row, i - 1)] = v;
                }
            } else {
                for row in 0..=i {
                    c_out[(row, i - 1)] = self.store.r_entry(row, i);
                }
            }
            let source = match self.sources[i - 1] {
                Source::Raw(j) => (0..k).map(|row| self.store.r_entry(row, j)).collect(),
                Source::Start {
                    col,
                    was_final: true,
                } => {
                    let mut e = vec![0.0; k];
                    e[col] = 1.0;
                    e
                }
                Source::Start {
                    col,
                    was_final: false,
                } => {
                    let mut c = self.store.preprocessed_coords(col);
                    c.resize(k, 0.0);
                    c
                }
            };
            for (row, v) in source.into_iter().enumerate() {
                c_in[(row, i - 1)] = v;
            }
        }
        (c_out, c_in)
    }

    /// Number of Hessenberg columns available from final basis vectors.
    fn usable_columns(&self) -> usize {
        if self.invariant.is_some() {
            self.store.cols()
        } else {
            self.store.big_start().saturating_sub(1)
        }
    }

    fn hessenberg(&self, k: usize) -> Result<DenseMatrix> {
        let (c_out, c_in) = self.coordinates(k);
        build_hessenberg_from_coordinates(&c_out, &c_in)
    }

    fn rhs(&self) -> f64 {
        self.gamma * self.store.r_entry(0, 0)
    }

    /// Generates `s` new vectors from the last basis column.
    fn next_panel(&mut self, s: usize) -> DenseMatrix {
        let last = self.store.cols() - 1;
        let start = self.store.column(last).to_vec();
        let was_final = self.store.is_final(last);
        let powers = mpk(self.a, &start, s);
        let first = self.store.cols();
        self.sources.push(Source::Start {
            col: last,
            was_final,
        });
        for k in 1..s {
            self.sources.push(Source::Raw(first + k - 1));
        }
        powers.columns(1..s + 1).to_owned()
    }

    fn first_panel(&mut self, v1: &[f64], s: usize) -> DenseMatrix {
        for k in 1..=s {
            self.sources.push(Source::Raw(k - 1));
        }
        mpk(self.a, v1, s)
    }

    /// One-stage push with detection of an invariant subspace.
    fn push_one_stage(&mut self, panel: &DenseMatrix, intra: IntraKind<'_>) -> Result<Outcome> {
        let start = self.store.cols();
        match bcgs2(&mut self.store, panel, intra) {
            Ok(()) => {
                for i in start..self.store.cols() {
                    let col_norm = (0..=i)
                        .map(|r| self.store.r_entry(r, i).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    if self.store.r_entry(i, i) <= 1e-12 * col_norm {
                        let coords: Vec<f64> = (0..=i).map(|r| self.store.r_entry(r, i)).collect();
                        self.store.truncate(i);
                        self.sources.truncate(i);
                        self.invariant = Some(coords);
                        return Ok(Outcome::Invariant);
                    }
                }
                Ok(Outcome::Continue)
            }
            Err(e) if e.is_breakdown() => self.column_fallback(panel, start, e),
            Err(e) => Err(e),
        }
    }

    /// Column-wise CGS2 over a panel whose block factorization failed. Only
    /// an exactly (to 1e-12) dependent column is accepted as the end of the
    /// Krylov space; anything else is a genuine breakdown.
    fn column_fallback(
        &mut self,
        panel: &DenseMatrix,
        start: usize,
        cause: Error,
    ) -> Result<Outcome> {
        for c in 0..panel.cols() {
            let x = panel.columns(c..c + 1);
            let xnorm = norm2(x.col(0));
            let mut coeffs = vec![0.0; self.store.cols()];
            let mut w = x.col(0).to_vec();
            for _ in 0..2 {
                let q = self.store.basis();
                let proj = q.t_mul(DenseMatrix::from_col_major(w.len(), 1, w.clone()).view());
                for (j, coeff) in coeffs.iter_mut().enumerate() {
                    *coeff += proj[(j, 0)];
                    let qj = q.col(j);
                    w.iter_mut()
                        .zip(qj)
                        .for_each(|(wi, qi)| *wi -= proj[(j, 0)] * qi);
                }
                self.store.ledger_mut().record(ReducePhase::Projection);
            }
            let rho = norm2(&w);
            if rho <= 1e-12 * xnorm {
                let mut coords = coeffs;
                coords.push(rho);
                let at = start + c;
                self.sources.truncate(at);
                self.invariant = Some(coords);
                return Ok(Outcome::Invariant);
            }
            bcgs2(&mut self.store, x, IntraKind::CholQr).map_err(|_| cause_clone(&cause))?;
        }
        Err(cause)
    }
}

fn cause_clone(e: &Error) -> Error {
    match e {
        Error::NonPositivePivot { step } => Error::NonPositivePivot { step: *step },
        Error::SingularTriangular { index } => Error::SingularTriangular { index: *index },
        Error::RankDeficient { condition } => Error::RankDeficient {
            condition: *condition,
        },
        Error::AllColumnsDiscarded => Error::AllColumnsDiscarded,
        other => Error::InvalidConfig(other.to_string()),
    }
}

fn derived_seed(seed: u64, cycle: usize) -> u64 {
    seed ^ (cycle as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Restarted s-step GMRES for `A x = b` from `x0`.
///
/// Configuration and dimension errors are returned as `Err`; numerical
/// breakdown of the orthogonalization stops the solve and is reported in
/// [`SolveReport::breakdown`] together with the last iterate.
pub fn sstep_gmres_solve(
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    cfg.validate()?;
    let n = cfg.n;
    if a.nrows() != n || a.ncols() != n || b.len() != n || x0.len() != n {
        return Err(Error::Dimension(format!(
            "operator is {}x{}, b has {}, x0 has {}, config n = {n}",
            a.nrows(),
            a.ncols(),
            b.len(),
            x0.len()
        )));
    }
    let (s, s_hat) = cfg.effective_steps();
    if cfg.scheme.uses_sketch() {
        build_sketch(cfg.sketch, n, s_hat, cfg.seed)?;
    }
    let a_norm = operator_norm_estimate(a);
    let m = cfg.m;

    let mut x = x0.to_vec();
    let mut report = SolveReport::default();
    let mut r0_norm = None;

    loop {
        let ax = a.spmv(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        report.ledger.record(ReducePhase::Norm);
        let gamma = norm2(&r);
        let r0 = *r0_norm.get_or_insert(gamma);
        let rel = if r0 == 0.0 { 0.0 } else { gamma / r0 };
        report.residual_history.push(rel);
        report.final_rel_residual = rel;
        if rel <= cfg.rel_tol {
            report.converged = true;
            break;
        }
        if report.restarts >= cfg.max_restarts {
            break;
        }

        let sketch = if cfg.scheme.uses_sketch() {
            Some(build_sketch(
                cfg.sketch,
                n,
                s_hat,
                derived_seed(cfg.seed, report.restarts),
            )?)
        } else {
            None
        };
        let v1: Vec<f64> = r.iter().map(|e| e / gamma).collect();
        let mut cycle = Cycle {
            a,
            store: BasisStore::new(n, m + 1),
            sources: Vec::with_capacity(m),
            invariant: None,
            gamma,
        };
        let outcome = run_cycle(&mut cycle, &v1, cfg, s, s_hat, sketch.as_ref(), r0);
        report.restarts += 1;
        report.ledger.absorb(cycle.store.ledger());
        if let Err(e) = outcome {
            if e.is_breakdown() {
                report.breakdown = Some(e.to_string());
                break;
            }
            return Err(e);
        }

        let k = cycle.usable_columns();
        if k == 0 {
            report.breakdown = Some("restart cycle produced no usable basis vectors".into());
            break;
        }
        let h = match cycle.hessenberg(k) {
            Ok(h) => h,
            Err(e) => {
                report.breakdown = Some(e.to_string());
                break;
            }
        };
        let (y, est) = solve_lsq(&h, cycle.rhs());
        let basis = cycle.store.basis();
        for (j, yj) in y.iter().enumerate() {
            let qj = basis.col(j);
            x.iter_mut().zip(qj).for_each(|(xi, qi)| *xi += yj * qi);
        }
        report.iterations += k;
        report.estimated_residuals.push(est / r0);
        report.orthogonality_errors.push(orthogonality_error(basis));
        report
            .arnoldi_residuals
            .push(arnoldi_residual(a, &cycle.store, &h, k) / a_norm.max(f64::MIN_POSITIVE));
    }
    Ok((x, report))
}

fn run_cycle(
    cycle: &mut Cycle<'_>,
    v1: &[f64],
    cfg: &SolverConfig,
    s: usize,
    s_hat: usize,
    sketch: Option<&SketchOperator>,
    r0: f64,
) -> Result<()> {
    let m = cfg.m;
    let target = cfg.rel_tol * r0;
    let converged = |cycle: &Cycle<'_>| -> Result<bool> {
        let k = cycle.usable_columns();
        if k == 0 {
            return Ok(false);
        }
        let h = cycle.hessenberg(k)?;
        Ok(solve_lsq(&h, cycle.rhs()).1 <= target)
    };

    match cfg.scheme {
        Scheme::StandardCgs2 | Scheme::Bcgs2CholQr2 | Scheme::Bcgs2RandCholQr => {
            let intra = match cfg.scheme {
                Scheme::Bcgs2CholQr2 => IntraKind::CholQr2,
                Scheme::Bcgs2RandCholQr => {
                    IntraKind::RandCholQr(sketch.expect("sketch built for scheme"))
                }
                _ => IntraKind::CholQr,
            };
            let first = if cfg.scheme == Scheme::StandardCgs2 {
                DenseMatrix::from_col_major(v1.len(), 1, v1.to_vec())
            } else {
                cycle.first_panel(v1, s)
            };
            if let Outcome::Invariant = cycle.push_one_stage(&first, intra)? {
                return Ok(());
            }
            while cycle.store.cols() < m + 1 {
                if converged(cycle)? {
                    return Ok(());
                }
                let panel = cycle.next_panel(s);
                if let Outcome::Invariant = cycle.push_one_stage(&panel, intra)? {
                    return Ok(());
                }
            }
        }
        Scheme::TwoStagePip | Scheme::TwoStageRandBcgs => {
            let preproc = if cfg.scheme == Scheme::TwoStagePip {
                Preprocess::Pip
            } else {
                Preprocess::RandBcgs
            };
            let scheme = TwoStage {
                preproc,
                sketch,
                reorthogonalize: cfg.reorthogonalize,
            };
            let per_big = s_hat / s;
            let first = cycle.first_panel(v1, s);
            scheme.push_panel(&mut cycle.store, &first)?;
            let mut pushed = 1;
            loop {
                if pushed % per_big == 0 || cycle.store.cols() == m + 1 {
                    scheme.finish_big_panel(&mut cycle.store)?;
                    if cycle.store.cols() == m + 1 || converged(cycle)? {
                        break;
                    }
                }
                let panel = cycle.next_panel(s);
                scheme.push_panel(&mut cycle.store, &panel)?;
                pushed += 1;
            }
        }
    }
    Ok(())
}

/// `||A Q_k - Q_{k+1} H||_2`, with `Q_{k+1}` replaced by `Q_k` when the
/// cycle ended on an invariant subspace.
fn arnoldi_residual(a: &CsrMatrix, store: &BasisStore, h: &DenseMatrix, k: usize) -> f64 {
    let q = store.basis();
    let qk = q.columns(0..k);
    let aq = a.spmm(qk);
    let rows = store.cols().min(k + 1);
    let qh = q.columns(0..rows).mul(&h.block(0..rows, 0..k));
    spectral_norm(aq.sub(&qh).view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::householder_qr;
    use crate::problems::laplace_2d;
    use crate::testutil::gaussian_matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(values: &[f64]) -> CsrMatrix {
        let t: Vec<_> = values.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        CsrMatrix::from_triplets(values.len(), values.len(), &t).unwrap()
    }

    fn random_sparse(n: usize, seed: u64) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0 + rng.random::<f64>()));
            for _ in 0..4 {
                t.push((i, rng.random_range(0..n), rng.random::<f64>() - 0.5));
            }
        }
        CsrMatrix::from_triplets(n, n, &t).unwrap()
    }

    /// Modified Gram-Schmidt Arnoldi, run twice per column.
    fn arnoldi(a: &CsrMatrix, v: &[f64], k: usize) -> (DenseMatrix, DenseMatrix) {
        let n = v.len();
        let mut q = DenseMatrix::zeros(n, k + 1);
        let mut h = DenseMatrix::zeros(k + 1, k);
        let nv = norm2(v);
        q.col_mut(0)
            .iter_mut()
            .zip(v)
            .for_each(|(qi, vi)| *qi = vi / nv);
        for j in 0..k {
            let mut w = a.spmv(q.col(j));
            for _ in 0..2 {
                for i in 0..=j {
                    let c = dot(q.col(i), &w);
                    h[(i, j)] += c;
                    w.iter_mut()
                        .zip(q.col(i))
                        .for_each(|(wi, qi)| *wi -= c * qi);
                }
            }
            h[(j + 1, j)] = norm2(&w);
            let hn = h[(j + 1, j)];
            q.col_mut(j + 1)
                .iter_mut()
                .zip(&w)
                .for_each(|(qi, wi)| *qi = wi / hn);
        }
        (q, h)
    }

    #[test]
    fn mpk_examples() {
        let v = [0.3, -1.0, 2.0];
        let p = mpk(&CsrMatrix::identity(3), &v, 3);
        for k in 0..4 {
            assert_eq!(p.col(k), &v);
        }
        let p = mpk(&diag(&[1.0, 2.0]), &[1.0, 1.0], 2);
        assert_eq!(
            p,
            DenseMatrix::from_rows(&[&[1.0, 1.0, 1.0], &[1.0, 2.0, 4.0]])
        );
        let p = mpk(&diag(&[2.0, 2.0]), &[1.0, -3.0], 1);
        assert_eq!(p.col(1), &[2.0, -6.0]);
    }

    #[test]
    fn change_of_basis_examples() {
        assert_eq!(
            change_of_basis(1),
            DenseMatrix::from_rows(&[&[0.0], &[1.0]])
        );
        let t = change_of_basis(3);
        assert_eq!((t.rows(), t.cols()), (4, 3));
        for i in 0..4 {
            for j in 0..3 {
                assert_eq!(t[(i, j)], if i == j + 1 { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn change_of_basis_satisfies_recurrence() {
        let a = random_sparse(60, 1);
        let v = gaussian_matrix(60, 1, 2);
        let p = mpk(&a, v.col(0), 6);
        let lhs = a.spmm(p.columns(0..6));
        let rhs = p.mul(&change_of_basis(6));
        let scale = operator_norm_estimate(&a) * p.norm_fro();
        assert!(lhs.sub(&rhs).norm_fro() <= 1e-12 * scale);
    }

    #[test]
    fn hessenberg_with_identity_factor_is_change_of_basis() {
        let t = change_of_basis(4);
        assert_eq!(build_hessenberg(&DenseMatrix::identity(5), &t).unwrap(), t);
    }

    #[test]
    fn hessenberg_singular_factor_is_rejected() {
        let mut r = DenseMatrix::identity(3);
        r[(1, 1)] = 0.0;
        assert!(matches!(
            build_hessenberg(&r, &change_of_basis(2)),
            Err(Error::SingularTriangular { index: 1 })
        ));
    }

    #[test]
    fn hessenberg_eigenvalues_match_spectrum() {
        let spectrum = [1.0, 1.5, 2.0, 3.0, 5.0, 8.0];
        let a = diag(&spectrum);
        let p = mpk(&a, &[1.0; 6], 6);
        let mut store = BasisStore::new(6, 7);
        bcgs2(&mut store, p.columns(0..6), IntraKind::CholQr).unwrap();
        let mut r = DenseMatrix::zeros(7, 7);
        r.set_block(0, 0, &store.r());
        // The last Krylov vector lies in the span of the first six.
        let last = store.basis().t_mul(p.columns(6..7));
        r.set_block(0, 6, &last);
        r[(6, 6)] = 1.0;
        let h = build_hessenberg(&r, &change_of_basis(6)).unwrap();
        let square = DMatrix::from_fn(6, 6, |i, j| h[(i, j)]);
        let mut eig: Vec<f64> = square.complex_eigenvalues().iter().map(|z| z.re).collect();
        eig.sort_by(f64::total_cmp);
        for (got, want) in eig.iter().zip(spectrum) {
            assert!((got - want).abs() <= 1e-6 * want, "{got} vs {want}");
        }
    }

    #[test]
    fn hessenberg_matches_arnoldi() {
        let a = random_sparse(100, 3);
        let v = gaussian_matrix(100, 1, 4);
        let k = 5;
        let p = mpk(&a, v.col(0), k);
        let (_, r) = householder_qr(&p);
        let h = build_hessenberg(&r.to_dense(), &change_of_basis(k)).unwrap();
        let (_, h_ref) = arnoldi(&a, v.col(0), k);
        let scale = operator_norm_estimate(&a);
        assert!(
            h.sub(&h_ref).max_abs() <= 1e-8 * scale,
            "{:e}",
            h.sub(&h_ref).max_abs()
        );
    }

    #[test]
    fn lsq_examples() {
        let (y, res) = solve_lsq(&DenseMatrix::from_rows(&[&[1.0], &[0.0]]), 1.0);
        assert_eq!((y[0], res), (1.0, 0.0));
        let (y, res) = solve_lsq(&DenseMatrix::from_rows(&[&[0.0], &[1.0]]), 1.0);
        assert!(y[0].abs() < 1e-15 && (res - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lsq_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = 7;
        let h = DenseMatrix::from_fn(k + 1, k, |i, j| {
            if i <= j + 1 {
                rng.random::<f64>() - 0.3
            } else {
                0.0
            }
        });
        let (y, res) = solve_lsq(&h, 2.0);
        let hm = DMatrix::from_column_slice(k + 1, k, h.data());
        let mut rhs = DVector::zeros(k + 1);
        rhs[0] = 2.0;
        let normal = (hm.transpose() * &hm)
            .lu()
            .solve(&(hm.transpose() * &rhs))
            .unwrap();
        let oracle = (rhs - &hm * &normal).norm();
        assert!((res - oracle).abs() <= 1e-12);
        for (a, b) in y.iter().zip(normal.iter()) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn lsq_rank_deficient_gives_minimum_norm() {
        let h = DenseMatrix::from_rows(&[&[1.0, 1.0], &[0.0, 0.0], &[0.0, 0.0]]);
        let (y, res) = solve_lsq(&h, 2.0);
        assert!((y[0] - 1.0).abs() < 1e-14 && (y[1] - 1.0).abs() < 1e-14);
        assert!(res < 1e-14);
    }

    #[test]
    fn config_validation() {
        let ok = SolverConfig::new(100, 60, 5, Scheme::TwoStageRandBcgs);
        assert_eq!(ok.s_hat, 60);
        assert!(ok.validate().is_ok());
        let mut bad = ok.clone();
        bad.s_hat = 25;
        assert!(bad.validate().is_err());
        bad.s_hat = 40;
        assert!(bad.validate().is_err(), "s_hat must divide m");
        let mut bad = ok.clone();
        bad.rel_tol = 1.0;
        assert!(bad.validate().is_err());
        let standard = SolverConfig::new(100, 60, 7, Scheme::StandardCgs2);
        assert!(standard.validate().is_ok());
        assert_eq!(
            "twostage_pip".parse::<Scheme>().unwrap(),
            Scheme::TwoStagePip
        );
        assert!("nope".parse::<Scheme>().is_err());
    }

    #[test]
    fn identity_system_converges_in_one_iteration() {
        let n = 50;
        let a = CsrMatrix::identity(n);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        for scheme in [
            Scheme::Bcgs2CholQr2,
            Scheme::Bcgs2RandCholQr,
            Scheme::StandardCgs2,
        ] {
            let cfg = SolverConfig::new(n, 10, 5, scheme);
            let (x, rep) = sstep_gmres_solve(&a, &b, &vec![0.0; n], &cfg).unwrap();
            assert!(rep.converged, "{scheme}: {rep:?}");
            assert_eq!(rep.iterations, 1, "{scheme}");
            for (xi, bi) in x.iter().zip(&b) {
                assert!((xi - bi).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn zero_rhs_is_already_solved() {
        let a = laplace_2d(4).unwrap();
        let cfg = SolverConfig::new(16, 4, 2, Scheme::Bcgs2CholQr2);
        let (x, rep) = sstep_gmres_solve(&a, &[0.0; 16], &[0.0; 16], &cfg).unwrap();
        assert!(rep.converged && rep.iterations == 0);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn small_laplace_converges_for_every_scheme() {
        let a = laplace_2d(12).unwrap();
        let n = a.nrows();
        let b = vec![1.0; n];
        for scheme in Scheme::ALL {
            let mut cfg = SolverConfig::new(n, 20, 5, scheme);
            cfg.seed = 3;
            let (x, rep) = sstep_gmres_solve(&a, &b, &vec![0.0; n], &cfg).unwrap();
            assert!(rep.converged, "{scheme}: {rep:?}");
            let r: Vec<f64> = b.iter().zip(a.spmv(&x)).map(|(bi, ai)| bi - ai).collect();
            assert!(norm2(&r) <= 1e-6 * norm2(&b) * 1.0001);
            for w in rep.residual_history.windows(2) {
                assert!(
                    w[1] <= w[0] * (1.0 + 1e-10),
                    "{scheme}: {:?}",
                    rep.residual_history
                );
            }
            assert!(
                rep.arnoldi_residuals.iter().all(|&e| e <= 1e-8),
                "{scheme}: {:?}",
                rep.arnoldi_residuals
            );
        }
    }

    #[test]
    fn solve_is_deterministic() {
        let a = laplace_2d(10).unwrap();
        let b = vec![1.0; 100];
        let cfg = SolverConfig::new(100, 20, 5, Scheme::TwoStageRandBcgs);
        let first = sstep_gmres_solve(&a, &b, &[0.0; 100], &cfg).unwrap();
        let second = sstep_gmres_solve(&a, &b, &[0.0; 100], &cfg).unwrap();
        assert_eq!(first.0, second.0);
        assert_eq!(first.1, second.1);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = laplace_2d(4).unwrap();
        let cfg = SolverConfig::new(10, 4, 2, Scheme::Bcgs2CholQr2);
        assert!(matches!(
            sstep_gmres_solve(&a, &[1.0; 16], &[0.0; 16], &cfg),
            Err(Error::Dimension(_))
        ));
    }
}
