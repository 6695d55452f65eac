//! Closed-form flop, latency, volume and storage counts for one restart
//! cycle of each orthogonalization scheme, evaluated in exact rationals.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;

use crate::error::{Error, Result};

pub type Exact = Ratio<i128>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CostScheme {
    /// CGS2, one vector at a time.
    Standard,
    /// BCGS2 with CholQR2.
    Sstep,
    /// One-stage randomized, `s_hat = s`.
    SketchEqS,
    /// Two-stage randomized, `s < s_hat < m`.
    SketchBetween,
    /// Two-stage randomized, `s_hat = m`.
    SketchEqM,
}

impl CostScheme {
    pub const ALL: [CostScheme; 5] = [
        CostScheme::Standard,
        CostScheme::Sstep,
        CostScheme::SketchEqS,
        CostScheme::SketchBetween,
        CostScheme::SketchEqM,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CostScheme::Standard => "standard",
            CostScheme::Sstep => "sstep",
            CostScheme::SketchEqS => "sketch_eq_s",
            CostScheme::SketchBetween => "sketch_between",
            CostScheme::SketchEqM => "sketch_eq_m",
        }
    }
}

impl fmt::Display for CostScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CostScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CostScheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidScheme(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostQuery {
    pub scheme: CostScheme,
    pub n: u64,
    pub m: u64,
    pub s: u64,
    /// Only read by [`CostScheme::SketchBetween`]; the other rows fix it.
    pub s_hat: u64,
    /// Sketch size; `2 (s_hat + 1)` when absent.
    pub m_hat: Option<u64>,
}

impl CostQuery {
    pub fn new(scheme: CostScheme, n: u64, m: u64, s: u64, s_hat: u64) -> Self {
        Self {
            scheme,
            n,
            m,
            s,
            s_hat,
            m_hat: None,
        }
    }

    /// `s_hat` as used by the row.
    pub fn effective_s_hat(&self) -> u64 {
        match self.scheme {
            CostScheme::Standard => 1,
            CostScheme::Sstep | CostScheme::SketchEqS => self.s,
            CostScheme::SketchBetween => self.s_hat,
            CostScheme::SketchEqM => self.m,
        }
    }

    pub fn effective_m_hat(&self) -> u64 {
        self.m_hat.unwrap_or(2 * (self.effective_s_hat() + 1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScheme(format!("{}: {msg}", self.scheme)));
        let (n, m, s) = (self.n, self.m, self.s);
        if n == 0 || m == 0 {
            return bad("n and m must be positive".into());
        }
        if self.scheme == CostScheme::Standard {
            return Ok(());
        }
        if s == 0 || s > m || m % s != 0 {
            return bad(format!("need 1 <= s <= m with s | m, got s={s} m={m}"));
        }
        if self.scheme == CostScheme::SketchBetween {
            let sh = self.s_hat;
            if !(s < sh && sh < m) || !sh.is_multiple_of(s) || m % sh != 0 {
                return bad(format!(
                    "need s < s_hat < m with s | s_hat | m, got s={s} s_hat={sh} m={m}"
                ));
            }
        }
        Ok(())
    }
}

/// Leading-order costs of one restart cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostReport {
    /// First printed total: orthogonalization (or sketched preprocessing).
    pub flops_total: Exact,
    /// Second printed total: reorthogonalization (or final orthogonalization).
    pub flops_second: Exact,
    pub latency: Exact,
    pub volume: Exact,
    pub storage: Exact,
}

impl CostReport {
    pub fn flops_combined(&self) -> Exact {
        self.flops_total + self.flops_second
    }
}

pub fn eval_cost(q: &CostQuery) -> Result<CostReport> {
    q.validate()?;
    let int = |v: u64| Exact::from_integer(i128::from(v));
    let (n, m, s, sh, mh) = (
        int(q.n),
        int(q.m),
        int(q.s),
        int(q.effective_s_hat()),
        int(q.effective_m_hat()),
    );
    let one = Exact::from_integer(1);
    let two = Exact::from_integer(2);
    let four = Exact::from_integer(4);
    let five = Exact::from_integer(5);
    let sstep_flops = two * n * m * m * (s + one) / s;

    let report = match q.scheme {
        CostScheme::Standard => CostReport {
            flops_total: two * n * m * m,
            flops_second: two * n * m * m,
            latency: four * m,
            volume: n * m * (two * m + four),
            storage: n * m,
        },
        CostScheme::Sstep => CostReport {
            flops_total: sstep_flops,
            flops_second: sstep_flops,
            latency: four * m / s,
            volume: n * m * (two * m + four + four * s) / s,
            storage: n * m,
        },
        CostScheme::SketchEqS => CostReport {
            flops_total: sstep_flops,
            flops_second: sstep_flops,
            latency: four * m / s,
            volume: n * m * (two * m + four + four * s + mh) / s,
            storage: n * (m + mh),
        },
        CostScheme::SketchBetween => CostReport {
            flops_total: sstep_flops,
            flops_second: two * n * m * m * (sh + one) / sh,
            latency: m / s + Exact::from_integer(3) * m / sh,
            volume: n * m * ((m + two + two * s + mh) / s + (m + two + four * sh) / sh),
            storage: n * (m + mh),
        },
        CostScheme::SketchEqM => CostReport {
            flops_total: five * n * m * m * (s + one) / s,
            flops_second: two * n * m * m,
            latency: m / s + one,
            volume: n * m * (m / two + mh + two + two * s) / s + two * n * m,
            storage: n * (m + mh),
        },
    };
    Ok(report)
}

/// The five rows for one `(n, m, s)`. The two-stage middle row uses `s_hat`
/// when `s < s_hat < m` is valid and otherwise the smallest valid `s_hat`;
/// it is omitted when no such `s_hat` exists.
pub fn cost_table(n: u64, m: u64, s: u64, s_hat: u64) -> Result<Vec<(CostQuery, CostReport)>> {
    let mut rows = Vec::with_capacity(5);
    for scheme in CostScheme::ALL {
        let mut q = CostQuery::new(scheme, n, m, s, s_hat);
        if scheme == CostScheme::SketchBetween && q.validate().is_err() {
            match (s + 1..m).find(|&c| s > 0 && c % s == 0 && m.is_multiple_of(c)) {
                Some(c) => q.s_hat = c,
                None => continue,
            }
        }
        let report = eval_cost(&q)?;
        rows.push((q, report));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn int(v: i128) -> Exact {
        Exact::from_integer(v)
    }

    #[test]
    fn standard_example() {
        let r = eval_cost(&CostQuery::new(CostScheme::Standard, 100_000, 100, 1, 1)).unwrap();
        assert_eq!(r.flops_total, int(2_000_000_000));
        assert_eq!(r.latency, int(400));
        assert_eq!(r.storage, int(10_000_000));
        assert_eq!(r.volume, int(100_000 * 100 * 204));
    }

    #[test]
    fn sstep_example() {
        let r = eval_cost(&CostQuery::new(CostScheme::Sstep, 100_000, 100, 5, 5)).unwrap();
        assert_eq!(r.latency, int(80));
        assert_eq!(r.flops_total, int(2 * 100_000 * 100 * 100 * 6) / int(5));
        assert_eq!(r.flops_total, int(2_400_000_000));
    }

    #[test]
    fn sketch_eq_m_example() {
        let q = CostQuery::new(CostScheme::SketchEqM, 100_000, 100, 5, 100);
        let r = eval_cost(&q).unwrap();
        assert_eq!(r.latency, int(21));
        assert_eq!(q.effective_m_hat(), 202);
        assert_eq!(r.storage, int(100_000 * (100 + 202)));
    }

    #[test]
    fn sketch_eq_s_matches_sstep_flops() {
        for (m, s) in [(100, 5), (60, 3), (12, 12), (7, 1)] {
            let a = eval_cost(&CostQuery::new(CostScheme::SketchEqS, 1000, m, s, s)).unwrap();
            let b = eval_cost(&CostQuery::new(CostScheme::Sstep, 1000, m, s, s)).unwrap();
            assert_eq!(a.flops_total, b.flops_total);
        }
    }

    #[test]
    fn latency_is_monotone_over_grid() {
        let mut checked = 0;
        for m in 2..=120u64 {
            for s in 1..m {
                if m % s != 0 {
                    continue;
                }
                for sh in s + 1..m {
                    if sh % s != 0 || m % sh != 0 {
                        continue;
                    }
                    let lat = |scheme| {
                        eval_cost(&CostQuery::new(scheme, 10, m, s, sh))
                            .unwrap()
                            .latency
                    };
                    let (sstep, between, eq_m) = (
                        lat(CostScheme::Sstep),
                        lat(CostScheme::SketchBetween),
                        lat(CostScheme::SketchEqM),
                    );
                    assert!(eq_m < between && between < sstep, "m={m} s={s} s_hat={sh}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn invalid_queries_are_rejected() {
        assert!(eval_cost(&CostQuery::new(CostScheme::Sstep, 10, 100, 7, 7)).is_err());
        assert!(eval_cost(&CostQuery::new(CostScheme::SketchBetween, 10, 100, 5, 100)).is_err());
        assert!(eval_cost(&CostQuery::new(CostScheme::SketchBetween, 10, 100, 5, 5)).is_err());
        assert!(matches!(
            "tsqr".parse::<CostScheme>(),
            Err(Error::InvalidScheme(_))
        ));
        assert_eq!(
            "sketch_eq_m".parse::<CostScheme>().unwrap(),
            CostScheme::SketchEqM
        );
    }

    #[test]
    fn table_has_five_rows_and_decreasing_latency() {
        let rows = cost_table(100_000, 100, 5, 100).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[3].0.s_hat, 10);
        let lat: Vec<Exact> = rows[1..].iter().map(|r| r.1.latency).collect();
        assert!(lat[0] <= lat[1] && lat[1] > lat[2] && lat[2] > lat[3]);
        assert_eq!(rows[0].1.flops_total, int(2_000_000_000));
    }
}
