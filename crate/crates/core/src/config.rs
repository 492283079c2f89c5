//! `key = value` configuration files with environment overrides.
//!
//! Blank lines and lines starting with `#` are ignored. A key `epoch_seconds`
//! is overridden by the variable `<PREFIX>_EPOCH_SECONDS` when it is set.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

pub const ENV_PREFIX: &str = "STAIRCASE";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, msg: format!("expected key = value, got `{line}`") })?;
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Overrides entries from `<prefix>_<KEY>` variables for the given keys.
    pub fn apply_env(&mut self, prefix: &str, keys: &[&str]) {
        self.apply_with(prefix, keys, |name| std::env::var(name).ok());
    }

    /// As [`Self::apply_env`], reading variables through `lookup`.
    pub fn apply_with(&mut self, prefix: &str, keys: &[&str], lookup: impl Fn(&str) -> Option<String>) {
        for k in keys {
            if let Some(v) = lookup(&format!("{prefix}_{}", k.to_ascii_uppercase())) {
                self.entries.insert((*k).to_string(), v);
            }
        }
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| invalid(format!("bad value `{v}` for `{key}`"))),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| invalid(format!("missing config key `{key}`")))
    }

    /// Comma-separated list value.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| invalid(format!("bad list item `{s}` for `{key}`"))))
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let mut kv =
            KeyValues::parse("# comment\nlisten = 127.0.0.1:7000\nepoch_seconds=300\n\neps = 1, 2.5\n").unwrap();
        assert_eq!(kv.get_str("listen"), Some("127.0.0.1:7000"));
        assert_eq!(kv.require::<f64>("epoch_seconds").unwrap(), 300.0);
        assert_eq!(kv.get_list::<f64>("eps").unwrap(), Some(vec![1.0, 2.5]));
        kv.apply_with("STAIRCASE", &["epoch_seconds", "listen"], |k| {
            (k == "STAIRCASE_EPOCH_SECONDS").then(|| "60".into())
        });
        assert_eq!(kv.require::<f64>("epoch_seconds").unwrap(), 60.0);
        assert_eq!(kv.get_str("listen"), Some("127.0.0.1:7000"));
    }

    #[test]
    fn errors() {
        assert!(matches!(KeyValues::parse("a=1\nnonsense\n"), Err(Error::Parse { line: 2, .. })));
        let kv = KeyValues::parse("n = ten").unwrap();
        assert!(kv.get::<u64>("n").is_err());
        assert!(kv.require::<u64>("missing").is_err());
    }
}
