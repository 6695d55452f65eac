//! CSV emission. Floats carry 17 significant digits so they parse back to
//! the same value.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::CliResult;

pub fn float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

/// Writes `header` and `rows` to `path`, or to stdout when `path` is `None`.
pub fn write_csv(path: Option<&Path>, header: &str, rows: &[String]) -> CliResult<()> {
    let mut sink: Box<dyn Write> = match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    writeln!(sink, "{header}")?;
    for row in rows {
        writeln!(sink, "{row}")?;
    }
    sink.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300, 0.0] {
            assert_eq!(float(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(float(f64::INFINITY), "inf");
        assert_eq!(float(f64::NAN), "NaN");
    }
}
