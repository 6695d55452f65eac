//! MatrixMarket coordinate files (`real`, `general` or `symmetric`).

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<CsrMatrix> {
    let text = fs::read_to_string(path)?;
    parse_matrix_market(&text)
}

/// Parses MatrixMarket text. Symmetric files are expanded to full storage,
/// duplicates are summed and 1-based indices become 0-based.
pub fn parse_matrix_market(text: &str) -> Result<CsrMatrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, banner) = lines
        .next()
        .ok_or_else(|| Error::Banner("empty file".into()))?;
    let symmetric = parse_banner(banner)?;

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    for (line_no, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(parse_err(line_no, "size line needs rows, cols and nnz"));
                }
                let nums: Vec<usize> = fields
                    .iter()
                    .map(|f| {
                        f.parse()
                            .map_err(|_| parse_err(line_no, format!("bad count `{f}`")))
                    })
                    .collect::<Result<_>>()?;
                if symmetric && nums[0] != nums[1] {
                    return Err(parse_err(line_no, "symmetric matrix must be square"));
                }
                size = Some((nums[0], nums[1], nums[2]));
                triplets.reserve(if symmetric { 2 * nums[2] } else { nums[2] });
            }
            Some((rows, cols, _)) => {
                if fields.len() != 3 {
                    return Err(parse_err(line_no, "entry needs row, col and value"));
                }
                let i = parse_index(fields[0], rows, line_no)?;
                let j = parse_index(fields[1], cols, line_no)?;
                let v: f64 = fields[2]
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad value `{}`", fields[2])))?;
                triplets.push((i, j, v));
                if symmetric && i != j {
                    triplets.push((j, i, v));
                }
            }
        }
    }

    let (rows, cols, nnz) =
        size.ok_or_else(|| parse_err(text.lines().count(), "missing size line"))?;
    let stored = if symmetric {
        triplets.iter().filter(|t| t.0 >= t.1).count()
    } else {
        triplets.len()
    };
    if stored != nnz {
        return Err(parse_err(
            text.lines().count(),
            format!("expected {nnz} entries, found {stored}"),
        ));
    }
    CsrMatrix::from_triplets(rows, cols, &triplets)
}

fn parse_banner(banner: &str) -> Result<bool> {
    let tokens: Vec<String> = banner
        .split_whitespace()
        .map(|t| t.to_ascii_lowercase())
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(Error::Banner(banner.to_string()));
    }
    if tokens[2] != "coordinate" || tokens[3] != "real" {
        return Err(Error::Banner(banner.to_string()));
    }
    match tokens[4].as_str() {
        "general" => Ok(false),
        "symmetric" => Ok(true),
        _ => Err(Error::Banner(banner.to_string())),
    }
}

fn parse_index(field: &str, bound: usize, line: usize) -> Result<usize> {
    let k: usize = field
        .parse()
        .map_err(|_| parse_err(line, format!("bad index `{field}`")))?;
    if k == 0 || k > bound {
        return Err(parse_err(line, format!("index {k} outside 1..={bound}")));
    }
    Ok(k - 1)
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Writes `a` as a `general` coordinate file. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_matrix_market(path: impl AsRef<Path>, a: &CsrMatrix) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for i in 0..a.nrows() {
        for (j, v) in a.row(i) {
            writeln!(out, "{} {} {:?}", i + 1, j + 1, v)?;
        }
    }
    fs::write(path, out)?;
    Ok(())
}
