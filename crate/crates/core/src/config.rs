//! `key = value` configuration files and list parsing shared with the CLI.
//!
//! Keys use the long flag names of the `simulate` command (`scheme`, `users`,
//! `k`, `n`, `snr-db`, `fb-noise-db`, `trials`, `min-errors`, `seed`, `out`,
//! `gamma-grid`, `g`, `threads`, `power`). Blank lines and lines starting
//! with `#` are ignored.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const KEYS: [&str; 14] = [
    "scheme",
    "users",
    "k",
    "n",
    "snr-db",
    "fb-noise-db",
    "trials",
    "min-errors",
    "seed",
    "out",
    "gamma-grid",
    "g",
    "threads",
    "power",
];

/// Parsed configuration: key to raw value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::validation(format!("config line {}: expected key = value", i + 1))
            })?;
            let key = k.trim().replace('_', "-");
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::validation(format!("config line {}: unknown key `{key}`", i + 1)));
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Typed lookup.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::validation(format!("config key `{key}`: cannot parse `{v}`")))
            })
            .transpose()
    }
}

/// Comma-separated numbers.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::validation(format!("not a finite number: `{t}`")))
        })
        .collect()
}

/// Comma-separated feedback noise levels in dB, where `perfect` (or `-inf`)
/// means noiseless feedback.
pub fn parse_fb_list(s: &str) -> Result<Vec<Option<f64>>> {
    s.split(',')
        .map(|t| match t.trim() {
            "perfect" | "-inf" => Ok(None),
            other => parse_list(other).map(|v| Some(v[0])),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file() {
        let cfg = ConfigFile::parse(
            "# sweep\nscheme = bmcl\nsnr_db = 2, 4\n\nfb-noise-db = perfect,-30\ntrials=1000\n",
        )
        .unwrap();
        assert_eq!(cfg.raw("scheme"), Some("bmcl"));
        assert_eq!(cfg.get::<u64>("trials").unwrap(), Some(1000));
        assert_eq!(parse_list(cfg.raw("snr-db").unwrap()).unwrap(), vec![2.0, 4.0]);
        assert_eq!(
            parse_fb_list(cfg.raw("fb-noise-db").unwrap()).unwrap(),
            vec![None, Some(-30.0)]
        );
        assert_eq!(cfg.get::<u64>("seed").unwrap(), None);
    }

    #[test]
    fn rejects_garbage() {
        assert!(ConfigFile::parse("colour = red").is_err());
        assert!(ConfigFile::parse("scheme").is_err());
        assert!(ConfigFile::parse("trials = many").unwrap().get::<u64>("trials").is_err());
        assert!(parse_list("1,,2").is_err());
        assert!(parse_list("nan").is_err());
    }
}
