//! Oblivious subspace embeddings: Gaussian, Count and Count-Gauss sketches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dense::{householder_qr, singular_values, DenseMatrix, MatRef};
use crate::error::{Error, Result};
use crate::ledger::{ReduceLedger, ReducePhase};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SketchKind {
    /// Dense i.i.d. normal entries scaled by `1/sqrt(m_hat)`.
    Gaussian,
    /// One unscaled `+-1` per row.
    Count,
    /// Count sketch to `m_c` rows, then a Gaussian sketch to `m_hat`.
    CountGauss,
    /// `n x n` identity; a control operator with zero distortion.
    Identity,
}

impl SketchKind {
    pub fn name(self) -> &'static str {
        match self {
            SketchKind::Gaussian => "gaussian",
            SketchKind::Count => "count",
            SketchKind::CountGauss => "countgauss",
            SketchKind::Identity => "identity",
        }
    }
}

impl std::str::FromStr for SketchKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "gaussian" | "gauss" => Ok(SketchKind::Gaussian),
            "count" => Ok(SketchKind::Count),
            "countgauss" => Ok(SketchKind::CountGauss),
            "identity" => Ok(SketchKind::Identity),
            _ => Err(Error::InvalidConfig(format!("unknown sketch kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
enum Storage {
    /// `n x m_hat`.
    Dense(DenseMatrix),
    /// `n x m_hat`.
    Sparse(CsrMatrix),
    /// `n x m_c` Count stage followed by an `m_c x m_hat` Gaussian stage.
    Composed {
        count: CsrMatrix,
        gauss: DenseMatrix,
    },
    Identity,
}

/// A sketch `Theta` (`n x m_hat`) applied as `Theta^T V`.
#[derive(Debug, Clone)]
pub struct SketchOperator {
    kind: SketchKind,
    n: usize,
    m_hat: usize,
    m_c: Option<usize>,
    seed: u64,
    storage: Storage,
}

/// Default sketch sizes for panels of `s_hat + 1` columns:
/// `(m_hat, m_c)`.
pub fn default_sizes(kind: SketchKind, n: usize, s_hat: usize) -> (usize, Option<usize>) {
    let w = s_hat + 1;
    match kind {
        SketchKind::Gaussian => (2 * w, None),
        SketchKind::Count => (2 * w * w, None),
        SketchKind::CountGauss => (2 * w, Some(2 * w * w)),
        SketchKind::Identity => (n, None),
    }
}

/// Builds a sketch sized for `s_hat + 1` columns.
pub fn build_sketch(kind: SketchKind, n: usize, s_hat: usize, seed: u64) -> Result<SketchOperator> {
    let (m_hat, m_c) = default_sizes(kind, n, s_hat);
    SketchOperator::with_sizes(kind, n, m_hat, m_c, seed)
}

impl SketchOperator {
    /// Builds a sketch with explicit sizes. `m_c` is required for
    /// `CountGauss` and ignored otherwise.
    pub fn with_sizes(
        kind: SketchKind,
        n: usize,
        m_hat: usize,
        m_c: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        if m_hat == 0 {
            return Err(Error::InvalidConfig("sketch size must be positive".into()));
        }
        let largest = match kind {
            SketchKind::CountGauss => {
                let m_c = m_c.ok_or_else(|| {
                    Error::InvalidConfig("count-gauss sketch needs an intermediate size".into())
                })?;
                if m_c < m_hat {
                    return Err(Error::InvalidConfig(format!(
                        "intermediate size {m_c} is smaller than the final size {m_hat}"
                    )));
                }
                m_c
            }
            _ => m_hat,
        };
        if kind != SketchKind::Identity && n <= largest {
            return Err(Error::AmbientTooSmall {
                ambient: n,
                sketch: largest,
            });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (storage, m_hat, m_c) = match kind {
            SketchKind::Gaussian => (Storage::Dense(gaussian(&mut rng, n, m_hat)), m_hat, None),
            SketchKind::Count => (Storage::Sparse(count(&mut rng, n, m_hat)), m_hat, None),
            SketchKind::CountGauss => {
                let m_c = largest;
                let count = count(&mut rng, n, m_c);
                let gauss = gaussian(&mut rng, m_c, m_hat);
                (Storage::Composed { count, gauss }, m_hat, Some(m_c))
            }
            SketchKind::Identity => (Storage::Identity, n, None),
        };
        Ok(Self {
            kind,
            n,
            m_hat,
            m_c,
            seed,
            storage,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            kind: SketchKind::Identity,
            n,
            m_hat: n,
            m_c: None,
            seed: 0,
            storage: Storage::Identity,
        }
    }

    pub fn kind(&self) -> SketchKind {
        self.kind
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn sketch_dim(&self) -> usize {
        self.m_hat
    }

    pub fn intermediate_dim(&self) -> Option<usize> {
        self.m_c
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Dense Gaussian matrix (`Gaussian`) or Gaussian stage (`CountGauss`).
    pub fn gaussian_part(&self) -> Option<&DenseMatrix> {
        match &self.storage {
            Storage::Dense(g) | Storage::Composed { gauss: g, .. } => Some(g),
            _ => None,
        }
    }

    /// Sparse matrix (`Count`) or Count stage (`CountGauss`).
    pub fn count_part(&self) -> Option<&CsrMatrix> {
        match &self.storage {
            Storage::Sparse(c) | Storage::Composed { count: c, .. } => Some(c),
            _ => None,
        }
    }

    /// `Theta^T V` with no ledger entry; for measurements outside a solve.
    pub fn project<'a>(&self, v: impl Into<MatRef<'a>>) -> Result<DenseMatrix> {
        let v = v.into();
        if v.rows() != self.n {
            return Err(Error::Dimension(format!(
                "sketch expects {} rows, panel has {}",
                self.n,
                v.rows()
            )));
        }
        Ok(match &self.storage {
            Storage::Dense(g) => g.view().t_mul(v),
            Storage::Sparse(c) => c.spmm_transpose(v),
            Storage::Composed { count, gauss } => {
                let partial = count.spmm_transpose(v);
                gauss.t_mul(&partial)
            }
            Storage::Identity => v.to_owned(),
        })
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let scale = 1.0 / (cols as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
        .collect();
    DenseMatrix::from_col_major(rows, cols, data)
}

fn count(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CsrMatrix {
    let mut col_idx = Vec::with_capacity(rows);
    let mut values = Vec::with_capacity(rows);
    for _ in 0..rows {
        col_idx.push(rng.random_range(0..cols));
        values.push(if rng.random::<bool>() { 1.0 } else { -1.0 });
    }
    CsrMatrix::new(rows, cols, (0..=rows).collect(), col_idx, values)
        .expect("one entry per row is valid CSR")
}

/// `Theta^T V`, counted as the single reduce of a sketch application.
pub fn apply_sketch<'a>(
    theta: &SketchOperator,
    v: impl Into<MatRef<'a>>,
    ledger: &mut ReduceLedger,
) -> Result<DenseMatrix> {
    let out = theta.project(v)?;
    ledger.record(ReducePhase::Sketch);
    Ok(out)
}

/// Largest `|sigma^2 - 1|` over the singular values of `Theta^T U`, where `U`
/// is an orthonormal basis of `range(V)`.
pub fn embedding_distortion(theta: &SketchOperator, v: &DenseMatrix) -> Result<f64> {
    if v.cols() == 0 {
        return Ok(0.0);
    }
    let (u, r) = householder_qr(v);
    let s = singular_values(r.to_dense().view());
    let condition = s[0] / s[s.len() - 1];
    if condition.is_nan() || condition > 1e15 {
        return Err(Error::RankDeficient { condition });
    }
    let sketched = theta.project(&u)?;
    Ok(singular_values(sketched.view())
        .into_iter()
        .chain(std::iter::repeat(0.0))
        .take(v.cols())
        .fold(0.0, |m, sigma| m.max((sigma * sigma - 1.0).abs())))
}
