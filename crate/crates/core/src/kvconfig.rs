//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys may repeat;
//! lookups return the last occurrence and [`KvConfig::all`] returns every
//! one in file order.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KvConfig {
    origin: PathBuf,
    entries: Vec<(String, String, usize)>,
}

impl KvConfig {
    pub fn parse(raw: &str, origin: impl Into<PathBuf>) -> Result<Self> {
        let origin = origin.into();
        let mut entries = Vec::new();
        for (n, line) in raw.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(&origin, n + 1, format!("expected key = value, got {line:?}")))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::parse(&origin, n + 1, "empty key"));
            }
            entries.push((k.to_string(), v.trim().to_string(), n + 1));
        }
        Ok(KvConfig { origin, entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&raw, path)
    }

    pub fn origin(&self) -> &Path {
        &self.origin
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v, _)| (k.as_str(), v.as_str()))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().rev().find(|(k, _, _)| k == key).map(|(_, v, _)| v.as_str())
    }

    pub fn all(&self, key: &str) -> Vec<&str> {
        self.entries.iter().filter(|(k, _, _)| k == key).map(|(_, v, _)| v.as_str()).collect()
    }

    /// Parses the last value of `key`, if present.
    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        let Some((_, v, line)) = self.entries.iter().rev().find(|(k, _, _)| k == key) else {
            return Ok(None);
        };
        v.parse()
            .map(Some)
            .map_err(|e| Error::parse(&self.origin, *line, format!("{key}: {e}")))
    }

    /// Overwrites `*slot` when `key` is present.
    pub fn set<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.parse_value(key)? {
            *slot = v;
        }
        Ok(())
    }

    /// Fails on the first key not in `known`.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        let known: BTreeSet<&str> = known.iter().copied().collect();
        match self.entries.iter().find(|(k, _, _)| !known.contains(k.as_str())) {
            Some((k, _, line)) => Err(Error::parse(&self.origin, *line, format!("unknown key {k:?}"))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn last_value_wins() {
        let c = KvConfig::parse("# c\na = 1\n\nb=x y\na= 2 \n", "t").unwrap();
        assert_eq!(c.get("a"), Some("2"));
        assert_eq!(c.all("a"), vec!["1", "2"]);
        assert_eq!(c.get("b"), Some("x y"));
        assert_eq!(c.parse_value::<u32>("a").unwrap(), Some(2));
        assert!(c.parse_value::<u32>("b").is_err());
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(
            KvConfig::parse("a = 1\nnope\n", "t"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(KvConfig::parse(" = 3", "t").is_err());
        let c = KvConfig::parse("a=1\nzz=2", "t").unwrap();
        assert!(matches!(c.reject_unknown(&["a"]), Err(Error::Parse { line: 2, .. })));
    }
}
