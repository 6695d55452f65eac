use std::path::Path;

use rayon::prelude::*;
use sstep_core::block::{bcgs2, BasisStore, IntraKind, Preprocess, TwoStage};
use sstep_core::cost::{cost_table, Exact};
use sstep_core::dense::DenseMatrix;
use sstep_core::gmres::{sstep_gmres_solve, Scheme, SolverConfig};
use sstep_core::matrix_market::{read_matrix_market, write_matrix_market};
use sstep_core::metrics::orthogonality_error;
use sstep_core::problems::{gaussian_matrix, gen_glued, laplace_2d, laplace_3d};
use sstep_core::sketch::{
    build_sketch, default_sizes, embedding_distortion, SketchKind, SketchOperator,
};
use sstep_core::sparse::CsrMatrix;

use crate::output::{float, write_csv};
use crate::{CliError, CliResult, Settings};

const DEFAULT_KAPPAS: &str = "1e2,1e4,1e6,1e8,1e10,1e12,1e14";

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn parse_scheme(name: Option<&str>) -> CliResult<Scheme> {
    name.unwrap_or("bcgs2_cholqr2")
        .parse()
        .map_err(|e: sstep_core::Error| config_err(e.to_string()))
}

fn parse_sketch(name: &str) -> CliResult<SketchKind> {
    name.trim()
        .parse()
        .map_err(|e: sstep_core::Error| config_err(e.to_string()))
}

fn parse_kappas(list: &str) -> CliResult<Vec<f64>> {
    list.split(',')
        .map(|k| {
            k.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| *v >= 1.0)
                .ok_or_else(|| config_err(format!("condition number `{k}` must be a number >= 1")))
        })
        .collect()
}

fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_add(trial as u64)
}

fn exact(v: Exact) -> String {
    if v.is_integer() {
        v.to_integer().to_string()
    } else {
        format!("{}/{}", v.numer(), v.denom())
    }
}

fn parse_schemes(list: Option<&str>) -> CliResult<Vec<Scheme>> {
    match list.unwrap_or("bcgs2_cholqr2").trim() {
        "all" => Ok(Scheme::ALL.to_vec()),
        names => names
            .split(',')
            .map(|k| parse_scheme(Some(k.trim())))
            .collect(),
    }
}

/// State of the basis after one panel has been processed.
struct PanelRecord {
    panel: usize,
    final_cols: usize,
    broke_down: bool,
    orth_error: f64,
    reduces: u64,
}

/// Runs `scheme` panel by panel over `v` and records every step. A breakdown
/// ends the run with a final record.
fn orthogonalize(
    v: &DenseMatrix,
    scheme: Scheme,
    s: usize,
    s_hat: usize,
    theta: Option<&SketchOperator>,
) -> Vec<PanelRecord> {
    let width = if scheme == Scheme::StandardCgs2 { 1 } else { s };
    let count = v.cols() / width;
    let per_big = s_hat / width;
    let mut store = BasisStore::new(v.rows(), v.cols());
    let two = match scheme {
        Scheme::TwoStagePip => Some(TwoStage::new(Preprocess::Pip, theta)),
        Scheme::TwoStageRandBcgs => Some(TwoStage::new(Preprocess::RandBcgs, theta)),
        _ => None,
    };
    let intra = match (scheme, theta) {
        (Scheme::Bcgs2CholQr2, _) => IntraKind::CholQr2,
        (Scheme::Bcgs2RandCholQr, Some(t)) => IntraKind::RandCholQr(t),
        _ => IntraKind::CholQr,
    };
    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        let panel = v.columns(i * width..(i + 1) * width);
        let step = match &two {
            Some(two) => two.push_panel(&mut store, panel).and_then(|()| {
                if (i + 1) % per_big == 0 || i + 1 == count {
                    two.finish_big_panel(&mut store)
                } else {
                    Ok(())
                }
            }),
            None => bcgs2(&mut store, panel, intra),
        };
        let final_cols = if two.is_some() {
            store.big_start()
        } else {
            store.cols()
        };
        let broke_down = step.is_err();
        records.push(PanelRecord {
            panel: i,
            final_cols,
            broke_down,
            orth_error: if broke_down {
                f64::NAN
            } else {
                orthogonality_error(store.basis().columns(0..final_cols))
            },
            reduces: store.ledger().total(),
        });
        if broke_down {
            break;
        }
    }
    records
}

/// CSV lines of one (scheme, condition number, trial) run.
struct OrthRun {
    key: (usize, usize, usize),
    lines: Vec<String>,
    broke_down: bool,
}

pub fn orthtest(cfg: &Settings) -> CliResult<()> {
    let o = &cfg.opts;
    let schemes = parse_schemes(o.scheme.as_deref())?;
    let n = o.n.unwrap_or(10_000);
    let s = o.s.unwrap_or(5);
    let m = o.m.unwrap_or(12 * s);
    let trials = o.trials.unwrap_or(1);
    let seed = o.seed.unwrap_or(0);
    let kind = parse_sketch(o.sketch.as_deref().unwrap_or("gaussian"))?;
    let kappas = parse_kappas(o.kappa.as_deref().unwrap_or(DEFAULT_KAPPAS))?;
    if s == 0 || m == 0 || !m.is_multiple_of(s) {
        return Err(config_err(format!(
            "panel width s={s} must divide the column count m={m}"
        )));
    }
    let s_hat_of = |scheme: Scheme| {
        if scheme.is_two_stage() {
            o.shat.unwrap_or(m)
        } else {
            s
        }
    };
    for &scheme in &schemes {
        let s_hat = s_hat_of(scheme);
        if s_hat < s || !s_hat.is_multiple_of(s) || !m.is_multiple_of(s_hat) {
            return Err(config_err(format!(
                "need s | shat | m, got s={s} shat={s_hat} m={m}"
            )));
        }
        if scheme.uses_sketch() {
            build_sketch(kind, n, s_hat, seed).map_err(|e| config_err(e.to_string()))?;
        }
    }

    let jobs: Vec<(usize, usize, usize)> = (0..schemes.len())
        .flat_map(|c| (0..kappas.len()).flat_map(move |k| (0..trials).map(move |t| (c, k, t))))
        .collect();
    let mut runs: Vec<OrthRun> = jobs
        .into_par_iter()
        .map(|(c, k, trial)| -> CliResult<_> {
            let scheme = schemes[c];
            let s_hat = s_hat_of(scheme);
            let kappa = kappas[k];
            let kappa_global = o.kappa_global.unwrap_or(kappa).max(kappa);
            let tseed = trial_seed(seed, trial);
            let v = gen_glued(n, m / s, s, kappa, kappa_global, tseed)?;
            let theta = if scheme.uses_sketch() {
                Some(build_sketch(kind, n, s_hat, tseed ^ 0x5eed)?)
            } else {
                None
            };
            let records = orthogonalize(&v, scheme, s, s_hat, theta.as_ref());
            let broke_down = records.last().is_some_and(|r| r.broke_down);
            let lines = records
                .iter()
                .map(|r| {
                    format!(
                        "{scheme},{n},{m},{s},{s_hat},{},{},{trial},{tseed},{},{},{},{},{}",
                        float(kappa),
                        float(kappa_global),
                        r.panel,
                        r.final_cols,
                        if r.broke_down { "breakdown" } else { "ok" },
                        float(r.orth_error),
                        r.reduces
                    )
                })
                .collect();
            Ok(OrthRun {
                key: (c, k, trial),
                lines,
                broke_down,
            })
        })
        .collect::<CliResult<_>>()?;
    runs.sort_by_key(|r| r.key);

    for (c, scheme) in schemes.iter().enumerate() {
        let mine = runs.iter().filter(|r| r.key.0 == c);
        let total = mine.clone().count();
        let failed = mine.filter(|r| r.broke_down).count();
        eprintln!("{scheme}: {total} runs, {failed} breakdowns");
    }
    let lines: Vec<String> = runs.into_iter().flat_map(|r| r.lines).collect();
    write_csv(
        o.out.as_deref(),
        "scheme,n,m,s,shat,kappa_panel,kappa_global,trial,seed,panel,final_cols,status,orth_error,reduces",
        &lines,
    )
}

fn load_operator(cfg: &Settings) -> CliResult<CsrMatrix> {
    let o = &cfg.opts;
    if let Some(path) = &o.matrix {
        return Ok(read_matrix_market(path)?);
    }
    let grid = o.grid.unwrap_or(50);
    let a = match o.problem.as_deref().unwrap_or("laplace2d") {
        "laplace2d" => laplace_2d(grid),
        "laplace3d" => laplace_3d(grid),
        other => {
            return Err(config_err(format!(
                "`solve` supports laplace2d, laplace3d or --matrix, not `{other}`"
            )))
        }
    };
    a.map_err(|e| config_err(e.to_string()))
}

pub fn solve(cfg: &Settings) -> CliResult<()> {
    let o = &cfg.opts;
    let a = load_operator(cfg)?;
    let n = a.nrows();
    if a.ncols() != n {
        return Err(config_err(format!(
            "operator must be square, got {n}x{}",
            a.ncols()
        )));
    }
    if let Some(expected) = o.n {
        if expected != n {
            return Err(config_err(format!(
                "--n {expected} does not match the operator dimension {n}"
            )));
        }
    }
    let mut configs = Vec::new();
    for scheme in parse_schemes(o.scheme.as_deref())? {
        let mut sc = SolverConfig::new(n, o.m.unwrap_or(60), o.s.unwrap_or(5), scheme);
        if let (Some(sh), true) = (o.shat, scheme.is_two_stage()) {
            sc.s_hat = sh;
        }
        if let Some(k) = &o.sketch {
            sc.sketch = parse_sketch(k)?;
        }
        sc.rel_tol = o.tol.unwrap_or(sc.rel_tol);
        sc.seed = o.seed.unwrap_or(0);
        sc.max_restarts = o.max_restarts.unwrap_or(sc.max_restarts);
        sc.validate().map_err(|e| config_err(e.to_string()))?;
        configs.push(sc);
    }

    let b = vec![1.0; n];
    let x0 = vec![0.0; n];
    let mut rows = Vec::new();
    let mut breakdowns = Vec::new();
    for sc in &configs {
        let scheme = sc.scheme;
        let rep = match sstep_gmres_solve(&a, &b, &x0, sc) {
            Ok((_, rep)) => rep,
            Err(e) if e.is_breakdown() => {
                eprintln!("{scheme}: breakdown: {e}");
                breakdowns.push(format!("{scheme}: {e}"));
                continue;
            }
            Err(e) => return Err(config_err(e.to_string())),
        };
        let get = |v: &[f64], i: usize| v.get(i).copied().map_or("NaN".to_string(), float);
        rows.extend((0..rep.restarts).map(|c| {
            format!(
                "{scheme},{c},{},{},{},{},{}",
                get(&rep.residual_history, c),
                get(&rep.residual_history, c + 1),
                get(&rep.estimated_residuals, c),
                get(&rep.orthogonality_errors, c),
                get(&rep.arnoldi_residuals, c)
            )
        }));
        eprintln!(
            "{scheme}: converged={} iterations={} restarts={} rel_residual={:.3e} reduces_total={} reduces: {}",
            rep.converged,
            rep.iterations,
            rep.restarts,
            rep.final_rel_residual,
            rep.ledger.total(),
            rep.ledger
        );
        if let Some(msg) = rep.breakdown {
            eprintln!("{scheme}: breakdown: {msg}");
            breakdowns.push(format!("{scheme}: {msg}"));
        }
    }
    write_csv(
        o.out.as_deref(),
        "scheme,cycle,start_rel_residual,end_rel_residual,estimated_rel_residual,orth_error,arnoldi_residual",
        &rows,
    )?;
    if breakdowns.is_empty() {
        Ok(())
    } else {
        Err(CliError::Breakdown(breakdowns.join("; ")))
    }
}

pub fn embedtest(cfg: &Settings) -> CliResult<()> {
    let o = &cfg.opts;
    let n = o.n.unwrap_or(5000);
    let s_hat = o.shat.unwrap_or(20);
    let trials = o.trials.unwrap_or(100);
    let seed = o.seed.unwrap_or(0);
    let kinds: Vec<SketchKind> = o
        .sketch
        .as_deref()
        .unwrap_or("gaussian")
        .split(',')
        .map(parse_sketch)
        .collect::<CliResult<_>>()?;
    if s_hat == 0 || s_hat >= n {
        return Err(config_err(format!(
            "need 0 < shat < n, got shat={s_hat} n={n}"
        )));
    }

    let mut rows = Vec::new();
    for (ki, &kind) in kinds.iter().enumerate() {
        let (default_m_hat, m_c) = default_sizes(kind, n, s_hat);
        let m_hat = if kind == SketchKind::Identity {
            n
        } else {
            o.mhat.unwrap_or(default_m_hat)
        };
        if kind != SketchKind::Identity {
            SketchOperator::with_sizes(kind, n, m_hat, m_c, seed)
                .map_err(|e| config_err(e.to_string()))?;
        }
        let eps: Vec<(usize, f64)> = (0..trials)
            .into_par_iter()
            .map(|t| -> CliResult<(usize, f64)> {
                let tseed = trial_seed(seed, t);
                let theta = if kind == SketchKind::Identity {
                    SketchOperator::identity(n)
                } else {
                    SketchOperator::with_sizes(kind, n, m_hat, m_c, tseed)?
                };
                let v = gaussian_matrix(n, s_hat, tseed ^ 0xface);
                Ok((t, embedding_distortion(&theta, &v)?))
            })
            .collect::<CliResult<_>>()?;
        let within = eps
            .iter()
            .filter(|e| e.1 <= std::f64::consts::FRAC_1_SQRT_2)
            .count();
        eprintln!(
            "{}: {within}/{trials} trials with eps <= 1/sqrt(2) (m_hat={m_hat})",
            kind.name()
        );
        rows.extend(eps.into_iter().map(|(t, e)| {
            (
                ki,
                t,
                format!("{},{n},{s_hat},{m_hat},{t},{}", kind.name(), float(e)),
            )
        }));
    }
    rows.sort_by_key(|r| (r.0, r.1));
    let lines: Vec<String> = rows.into_iter().map(|r| r.2).collect();
    write_csv(o.out.as_deref(), "kind,n,shat,mhat,trial,eps", &lines)
}

pub fn costmodel(cfg: &Settings) -> CliResult<()> {
    let o = &cfg.opts;
    let n = o.n.unwrap_or(100_000) as u64;
    let m = o.m.unwrap_or(100) as u64;
    let s = o.s.unwrap_or(5) as u64;
    let s_hat = o.shat.unwrap_or(m as usize) as u64;
    let table = cost_table(n, m, s, s_hat).map_err(|e| config_err(e.to_string()))?;
    let rows: Vec<String> = table
        .iter()
        .map(|(q, r)| {
            format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                q.scheme,
                q.n,
                q.m,
                q.s,
                q.effective_s_hat(),
                q.effective_m_hat(),
                exact(r.flops_total),
                exact(r.flops_second),
                exact(r.latency),
                exact(r.volume),
                exact(r.storage)
            )
        })
        .collect();
    write_csv(
        o.out.as_deref(),
        "scheme,n,m,s,shat,mhat,flops_total,flops_second,latency,volume,storage",
        &rows,
    )
}

fn dense_to_csr(v: &DenseMatrix) -> CliResult<CsrMatrix> {
    let triplets: Vec<(usize, usize, f64)> = (0..v.cols())
        .flat_map(|j| v.col(j).iter().enumerate().map(move |(i, &x)| (i, j, x)))
        .filter(|t| t.2 != 0.0)
        .collect();
    Ok(CsrMatrix::from_triplets(v.rows(), v.cols(), &triplets)?)
}

pub fn gen(cfg: &Settings) -> CliResult<()> {
    let o = &cfg.opts;
    let out: &Path = o
        .out
        .as_deref()
        .ok_or_else(|| config_err("`gen` needs --out"))?;
    let a = match o.problem.as_deref().unwrap_or("laplace2d") {
        "laplace2d" => laplace_2d(o.grid.unwrap_or(50)).map_err(|e| config_err(e.to_string()))?,
        "laplace3d" => laplace_3d(o.grid.unwrap_or(20)).map_err(|e| config_err(e.to_string()))?,
        "glued" => {
            let s = o.s.unwrap_or(5);
            let m = o.m.unwrap_or(12 * s);
            if s == 0 || !m.is_multiple_of(s) {
                return Err(config_err(format!("panel width s={s} must divide m={m}")));
            }
            let kappas = parse_kappas(o.kappa.as_deref().unwrap_or("1e6"))?;
            let [kappa] = kappas[..] else {
                return Err(config_err("`gen --problem glued` takes a single --kappa"));
            };
            let v = gen_glued(
                o.n.unwrap_or(10_000),
                m / s,
                s,
                kappa,
                o.kappa_global.unwrap_or(kappa).max(kappa),
                o.seed.unwrap_or(0),
            )
            .map_err(|e| config_err(e.to_string()))?;
            dense_to_csr(&v)?
        }
        other => return Err(config_err(format!("unknown problem `{other}`"))),
    };
    write_matrix_market(out, &a)?;
    eprintln!(
        "wrote {}x{} with {} entries to {}",
        a.nrows(),
        a.ncols(),
        a.nnz(),
        out.display()
    );
    Ok(())
}
