//! End-to-end solver properties exercised through the public API.

use crate::{
    laplace_2d, laplace_3d, read_matrix_market, sstep_gmres_solve, write_matrix_market, CsrMatrix,
    ReducePhase, Scheme, SolverConfig,
};

fn residual(a: &CsrMatrix, b: &[f64], x: &[f64]) -> f64 {
    let ax = a.spmv(x);
    b.iter()
        .zip(ax)
        .map(|(bi, ai)| (bi - ai).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn rhs(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 1.0 + ((i * 37) % 11) as f64 / 11.0)
        .collect()
}

#[test]
fn estimated_residual_matches_true_residual() {
    let a = laplace_2d(30).unwrap();
    let n = a.nrows();
    let b = rhs(n);
    for scheme in Scheme::ALL {
        let mut cfg = SolverConfig::new(n, 30, 5, scheme);
        cfg.rel_tol = 1e-9;
        let (_, rep) = sstep_gmres_solve(&a, &b, &vec![0.0; n], &cfg).unwrap();
        assert!(rep.converged, "{scheme}");
        for (c, est) in rep.estimated_residuals.iter().enumerate() {
            let actual = rep.residual_history[c + 1];
            assert!(
                (est - actual).abs() <= 1e-6 * actual.max(1e-12) + 1e-14,
                "{scheme} cycle {c}: estimate {est:e}, true {actual:e}"
            );
        }
    }
}

#[test]
fn reported_residual_is_the_true_residual() {
    let a = laplace_3d(8).unwrap();
    let n = a.nrows();
    let b = rhs(n);
    let cfg = SolverConfig::new(n, 40, 4, Scheme::TwoStageRandBcgs);
    let (x, rep) = sstep_gmres_solve(&a, &b, &vec![0.0; n], &cfg).unwrap();
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let actual = residual(&a, &b, &x) / b_norm;
    assert!((actual - rep.final_rel_residual).abs() <= 1e-12);
    assert!(rep.final_rel_residual <= cfg.rel_tol);
}

#[test]
fn residual_history_never_increases() {
    let a = laplace_2d(40).unwrap();
    let n = a.nrows();
    let b = rhs(n);
    for scheme in Scheme::ALL {
        let (_, rep) =
            sstep_gmres_solve(&a, &b, &vec![0.0; n], &SolverConfig::new(n, 20, 5, scheme)).unwrap();
        for w in rep.residual_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{scheme}");
        }
        assert!(
            rep.orthogonality_errors.iter().all(|&e| e <= 1e-12),
            "{scheme}"
        );
    }
}

#[test]
fn two_stage_uses_fewer_reduces_than_one_stage() {
    let a = laplace_2d(50).unwrap();
    let n = a.nrows();
    let b = vec![1.0; n];
    let run = |scheme| {
        let mut cfg = SolverConfig::new(n, 60, 5, scheme);
        cfg.seed = 2;
        sstep_gmres_solve(&a, &b, &vec![0.0; n], &cfg).unwrap().1
    };
    let one = run(Scheme::Bcgs2RandCholQr);
    let two = run(Scheme::TwoStageRandBcgs);
    assert!(one.converged && two.converged);
    assert!(two.ledger.total() < one.ledger.total());
    assert_eq!(two.ledger.count(ReducePhase::Norm), two.restarts as u64 + 1);
}

#[test]
fn warm_start_at_solution_needs_no_iterations() {
    let a = laplace_2d(10).unwrap();
    let x_true: Vec<f64> = (0..100).map(|i| (i as f64 * 0.1).sin()).collect();
    let b = a.spmv(&x_true);
    let cfg = SolverConfig::new(100, 10, 5, Scheme::Bcgs2CholQr2);
    let (_, cold) = sstep_gmres_solve(&a, &b, &[0.0; 100], &cfg).unwrap();
    let (x, warm) = sstep_gmres_solve(&a, &b, &x_true, &cfg).unwrap();
    assert!(cold.iterations > 0);
    assert_eq!((warm.iterations, warm.restarts), (0, 0));
    assert_eq!(x, x_true);
}

#[test]
fn matrix_market_operator_solves_like_the_original() {
    let a = laplace_2d(12).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.mtx");
    write_matrix_market(&path, &a).unwrap();
    let loaded = read_matrix_market(&path).unwrap();
    let n = a.nrows();
    let b = rhs(n);
    let cfg = SolverConfig::new(n, 20, 5, Scheme::Bcgs2CholQr2);
    let first = sstep_gmres_solve(&a, &b, &vec![0.0; n], &cfg).unwrap();
    let second = sstep_gmres_solve(&loaded, &b, &vec![0.0; n], &cfg).unwrap();
    assert_eq!(first.0, second.0);
}

#[test]
fn sketch_too_large_for_problem_is_a_configuration_error() {
    let a = laplace_2d(4).unwrap();
    let cfg = SolverConfig::new(16, 8, 4, Scheme::TwoStageRandBcgs);
    assert!(sstep_gmres_solve(&a, &[1.0; 16], &[0.0; 16], &cfg).is_err());
}
