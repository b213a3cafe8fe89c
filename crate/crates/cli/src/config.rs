//! Flat `key = value` configuration. Command-line flags override file
//! values; keys are case-insensitive and `-` is read as `_`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{io, CliError, Result};

/// Every key any subcommand understands.
pub const KNOWN_KEYS: &[&str] = &[
    "clusters",
    "compare",
    "curves",
    "design",
    "dims",
    "folds",
    "inputs",
    "iterations",
    "k",
    "k_max",
    "method",
    "model",
    "order",
    "out",
    "p",
    "plot",
    "reducer",
    "regressor",
    "resolution",
    "rml_k",
    "runs",
    "seed",
    "subsamples",
    "threshold",
    "x_percent",
];

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

/// Parses configuration text. Everything after `#` on a line is a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut values = BTreeMap::new();
    let mut unknown = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Config(format!("line {}: expected key = value, found {line:?}", i + 1)));
        };
        let key = normalize(k);
        if !KNOWN_KEYS.contains(&key.as_str()) {
            unknown.push(key.clone());
        }
        values.insert(key, v.trim().to_string());
    }
    if !unknown.is_empty() {
        return Err(CliError::Config(format!("unknown keys: {}", unknown.join(", "))));
    }
    Ok(values)
}

/// Merged view of the configuration file and command-line flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let values = match path {
            Some(p) => parse_config(&fs::read_to_string(p).map_err(|e| io(p, e))?)?,
            None => BTreeMap::new(),
        };
        Ok(Self { values })
    }

    /// Applies flag values on top of the file values.
    pub fn apply(&mut self, overrides: Vec<(&'static str, Option<String>)>) {
        for (k, v) in overrides {
            if let Some(v) = v {
                self.values.insert(k.to_string(), v);
            }
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Config(format!("invalid value {v:?} for key '{key}'"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| CliError::Config(format!("missing required key '{key}'")))
    }

    /// An input path that must exist.
    pub fn input_path(&self, key: &str) -> Result<PathBuf> {
        let p = PathBuf::from(self.require::<String>(key)?);
        if !p.exists() {
            return Err(CliError::Config(format!("{key} path {} does not exist", p.display())));
        }
        Ok(p)
    }

    pub fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key).map(|v| v.to_ascii_lowercase()) {
            None => Ok(default),
            Some(v) => match v.as_str() {
                "true" | "yes" | "1" | "on" => Ok(true),
                "false" | "no" | "0" | "off" => Ok(false),
                _ => Err(CliError::Config(format!("invalid boolean {v:?} for key '{key}'"))),
            },
        }
    }

    /// Sets a resolved value so it is recorded in the run manifest.
    pub fn resolve(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &String)> {
        self.values.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_normalization() {
        let v = parse_config("# header\nX-Percent = 95 # trailing\n\nseed=3\n").unwrap();
        assert_eq!(v.get("x_percent").unwrap(), "95");
        assert_eq!(v.get("seed").unwrap(), "3");
    }

    #[test]
    fn unknown_keys_are_listed() {
        let err = parse_config("seed=1\ncolour=red\nsize=2\n").unwrap_err();
        assert_eq!(err.kind(), "config");
        assert!(err.to_string().contains("colour, size"));
    }

    #[test]
    fn flags_override_file() {
        let mut s = Settings {
            values: parse_config("seed=1\nfolds=5").unwrap(),
        };
        s.apply(vec![("seed", Some("9".into())), ("folds", None)]);
        assert_eq!(s.get::<u64>("seed").unwrap(), Some(9));
        assert_eq!(s.get::<usize>("folds").unwrap(), Some(5));
        assert!(s.get::<usize>("dims").unwrap().is_none());
    }

    #[test]
    fn bad_values_are_config_errors() {
        let s = Settings {
            values: parse_config("folds=ten\nplot=maybe").unwrap(),
        };
        assert_eq!(s.get::<usize>("folds").unwrap_err().kind(), "config");
        assert_eq!(s.flag("plot", true).unwrap_err().kind(), "config");
        assert!(parse_config("just words").is_err());
    }
}
