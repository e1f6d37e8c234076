//! Flat `key = value` text used by run configs, checkpoint headers, manifest
//! preambles and evaluation reports.
//!
//! One pair per line. Blank lines and lines starting with `#` are skipped by
//! [`KvList::parse`]. Keys are unique; order of first appearance is kept so
//! that rendering is stable.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvList {
    pairs: Vec<(String, String)>,
}

impl KvList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut out = KvList::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            out.push_line(line, idx + 1)?;
        }
        Ok(out)
    }

    /// Parses a single `key = value` line; `line_no` is used for errors.
    pub fn push_line(&mut self, line: &str, line_no: usize) -> Result<()> {
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("expected `key = value`, got {line:?}"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty key".into(),
            });
        }
        if self.get(key).is_some() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("duplicate key {key:?}"),
            });
        }
        self.pairs.push((key.to_string(), value.trim().to_string()));
        Ok(())
    }

    /// Inserts or replaces a value.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.pairs.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.pairs.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::format(format!("missing key {key:?}")))
    }

    pub fn parse_value<T>(&self, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|e| Error::format(format!("key {key:?}: cannot parse {raw:?}: {e}")))
    }

    pub fn parse_list<T>(&self, key: &str) -> Result<Vec<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        split_list(self.require(key)?)
            .map(|item| {
                item.parse().map_err(|e| {
                    Error::format(format!("key {key:?}: cannot parse item {item:?}: {e}"))
                })
            })
            .collect()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|(k, _)| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Renders one `key = value` line per pair, each prefixed by `prefix`.
    pub fn render(&self, prefix: &str) -> String {
        let mut out = String::new();
        for (k, v) in &self.pairs {
            let _ = writeln!(out, "{prefix}{k} = {v}");
        }
        out
    }
}

/// Splits a comma-separated list value, trimming items and dropping empties.
pub fn split_list(raw: &str) -> impl Iterator<Item = &str> {
    raw.split(',').map(str::trim).filter(|s| !s.is_empty())
}

pub fn join_list<T: ToString>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_skips_comments() {
        let kv = KvList::parse("# header\n\na = 1\n b=two words \n").unwrap();
        assert_eq!(kv.get("a"), Some("1"));
        assert_eq!(kv.get("b"), Some("two words"));
        assert_eq!(kv.len(), 2);
    }

    #[test]
    fn duplicate_key_reports_line() {
        match KvList::parse("a = 1\na = 2") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_equals_is_error() {
        assert!(matches!(
            KvList::parse("novalue"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn typed_lists() {
        let kv = KvList::parse("xs = 1, 2,3").unwrap();
        assert_eq!(kv.parse_list::<u32>("xs").unwrap(), vec![1, 2, 3]);
        assert!(kv.parse_value::<u32>("xs").is_err());
    }

    #[test]
    fn render_round_trip() {
        let mut kv = KvList::new();
        kv.set("x", 0.1f32);
        kv.set("labels", join_list(&["i", "u"]));
        let back = KvList::parse(&kv.render("")).unwrap();
        assert_eq!(back, kv);
        assert_eq!(
            back.parse_value::<f32>("x").unwrap().to_bits(),
            0.1f32.to_bits()
        );
    }
}
