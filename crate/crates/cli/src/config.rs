//! Flat `key = value` configuration merged under the command-line flags.

use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use crate::{CliError, CliResult, Options};

/// Parses `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; keys may use `-` or `_`.
pub fn parse_config(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", i + 1)))?;
        out.push((key.trim().replace('-', "_"), value.trim().to_string()));
    }
    Ok(out)
}

/// Resolved flags: command line first, then the config file.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    pub opts: Options,
}

fn fill<T: FromStr>(slot: &mut Option<T>, key: &str, value: &str) -> CliResult<()> {
    if slot.is_none() {
        let parsed = value
            .parse()
            .map_err(|_| CliError::Config(format!("invalid value `{value}` for `{key}`")))?;
        *slot = Some(parsed);
    }
    Ok(())
}

impl Settings {
    pub fn load(opts: Options) -> CliResult<Self> {
        let Some(path) = opts.config.clone() else {
            return Ok(Self { opts });
        };
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::merge(opts, &parse_config(&text)?)
    }

    pub fn merge(mut opts: Options, entries: &[(String, String)]) -> CliResult<Self> {
        for (key, value) in entries {
            let o = &mut opts;
            match key.as_str() {
                "n" => fill(&mut o.n, key, value)?,
                "m" => fill(&mut o.m, key, value)?,
                "s" => fill(&mut o.s, key, value)?,
                "shat" => fill(&mut o.shat, key, value)?,
                "scheme" => fill(&mut o.scheme, key, value)?,
                "sketch" => fill(&mut o.sketch, key, value)?,
                "seed" => fill(&mut o.seed, key, value)?,
                "trials" => fill(&mut o.trials, key, value)?,
                "tol" => fill(&mut o.tol, key, value)?,
                "out" => fill::<PathBuf>(&mut o.out, key, value)?,
                "kappa" => fill(&mut o.kappa, key, value)?,
                "kappa_global" => fill(&mut o.kappa_global, key, value)?,
                "mhat" => fill(&mut o.mhat, key, value)?,
                "matrix" => fill::<PathBuf>(&mut o.matrix, key, value)?,
                "problem" => fill(&mut o.problem, key, value)?,
                "grid" => fill(&mut o.grid, key, value)?,
                "max_restarts" => fill(&mut o.max_restarts, key, value)?,
                other => return Err(CliError::Config(format!("unknown config key `{other}`"))),
            }
        }
        Ok(Self { opts })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_skips_comments() {
        let entries = parse_config("# sweep\nm = 60\n\nmax-restarts=3\n").unwrap();
        assert_eq!(
            entries,
            vec![
                ("m".to_string(), "60".to_string()),
                ("max_restarts".to_string(), "3".to_string())
            ]
        );
        assert!(parse_config("m 60").is_err());
    }

    #[test]
    fn flags_take_precedence() {
        let opts = Options {
            m: Some(30),
            ..Options::default()
        };
        let entries = parse_config("m = 60\ns = 5\n").unwrap();
        let merged = Settings::merge(opts, &entries).unwrap().opts;
        assert_eq!((merged.m, merged.s), (Some(30), Some(5)));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(
            Settings::merge(Options::default(), &parse_config("colour = red").unwrap()).is_err()
        );
        assert!(Settings::merge(Options::default(), &parse_config("m = many").unwrap()).is_err());
    }
}
