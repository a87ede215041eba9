//! Line-oriented `key = value` text format shared by the configuration file,
//! grid files, prep plans and model files.
//!
//! Grammar:
//!
//! ```text
//! file    := line*
//! line    := blank | comment | entry
//! comment := ws* '#' any*
//! entry   := ws* key ws* '=' ws* value ws*
//! key     := [A-Za-z0-9_.-]+        (dotted section prefixes, e.g. `prep.top_k`)
//! value   := any*                   (trimmed; may be empty)
//! ```
//!
//! Keys are unique within a document and entry order is preserved. Floats are
//! written with 17 significant digits (`{:.16e}`) so every `f64` round-trips.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Document {
    entries: Vec<(String, String)>,
    index: HashMap<String, usize>,
}

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'.' | b'-'))
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

pub fn parse_f64(s: &str) -> Option<f64> {
    match s {
        "inf" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        "NaN" | "nan" => Some(f64::NAN),
        _ => s.parse().ok(),
    }
}

impl Document {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = Document::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::parse(lineno, "expected `key = value`"));
            };
            let key = key.trim();
            if !valid_key(key) {
                return Err(Error::parse(lineno, format!("invalid key `{key}`")));
            }
            if doc.index.contains_key(key) {
                return Err(Error::parse(lineno, format!("duplicate key `{key}`")));
            }
            doc.push(key, value.trim());
        }
        Ok(doc)
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Into<String>) {
        let key = key.into();
        let value = value.into();
        debug_assert!(valid_key(&key), "invalid key {key}");
        match self.index.get(&key) {
            Some(&i) => self.entries[i].1 = value,
            None => {
                self.index.insert(key.clone(), self.entries.len());
                self.entries.push((key, value));
            }
        }
    }

    pub fn push_f64(&mut self, key: impl Into<String>, value: f64) {
        self.push(key, fmt_f64(value));
    }

    pub fn push_f64s(&mut self, key: impl Into<String>, values: &[f64]) {
        let joined = values.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(" ");
        self.push(key, joined);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.index.get(key).map(|&i| self.entries[i].1.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.index.contains_key(key)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("missing key `{key}`")))
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("cannot parse `{key} = {v}`"))),
        }
    }

    pub fn require_parsed<T: FromStr>(&self, key: &str) -> Result<T> {
        self.parsed(key)?
            .ok_or_else(|| Error::Config(format!("missing key `{key}`")))
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => parse_f64(v)
                .map(Some)
                .ok_or_else(|| Error::Config(format!("cannot parse `{key} = {v}` as a number"))),
        }
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        self.f64(key)?
            .ok_or_else(|| Error::Config(format!("missing key `{key}`")))
    }

    /// Whitespace-separated floats.
    pub fn f64s(&self, key: &str) -> Result<Vec<f64>> {
        let v = self.require(key)?;
        v.split_whitespace()
            .map(|t| {
                parse_f64(t)
                    .ok_or_else(|| Error::Config(format!("cannot parse `{t}` in `{key}`")))
            })
            .collect()
    }

    /// Comma-separated list; empty items are skipped.
    pub fn list(&self, key: &str) -> Option<Vec<&str>> {
        self.get(key).map(|v| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .collect()
        })
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some("true" | "1" | "yes") => Ok(Some(true)),
            Some("false" | "0" | "no") => Ok(Some(false)),
            Some(v) => Err(Error::Config(format!("cannot parse `{key} = {v}` as a bool"))),
        }
    }

    /// Checks the `schema_version` entry.
    pub fn expect_schema(&self, expected: u32) -> Result<()> {
        let found = self.require("schema_version")?;
        if found != expected.to_string() {
            return Err(Error::Schema {
                expected: expected.to_string(),
                found: found.to_string(),
            });
        }
        Ok(())
    }

    /// Sub-document of every entry under `prefix.`, with the prefix stripped.
    pub fn section(&self, prefix: &str) -> Document {
        let mut out = Document::new();
        let dotted = format!("{prefix}.");
        for (k, v) in self.entries() {
            if let Some(rest) = k.strip_prefix(&dotted) {
                out.push(rest, v);
            }
        }
        out
    }

    /// Appends every entry of `other` under `prefix.`.
    pub fn extend_prefixed(&mut self, prefix: &str, other: &Document) {
        for (k, v) in other.entries() {
            self.push(format!("{prefix}.{k}"), v);
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            if v.is_empty() {
                let _ = writeln!(out, "{k} =");
            } else {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_sections() {
        let doc = Document::parse(
            "# header\n\nschema_version = 1\nprep.top_k = 20\n  prep.mi_bins=16  \nseed = 7\n",
        )
        .unwrap();
        assert_eq!(doc.len(), 4);
        assert_eq!(doc.get("prep.mi_bins"), Some("16"));
        let prep = doc.section("prep");
        assert_eq!(prep.require_parsed::<usize>("top_k").unwrap(), 20);
        assert!(doc.expect_schema(1).is_ok());
        assert!(matches!(doc.expect_schema(2), Err(Error::Schema { .. })));
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(Document::parse("no equals sign").is_err());
        assert!(Document::parse("a = 1\na = 2").is_err());
        assert!(Document::parse("bad key = 1").is_err());
        assert!(Document::parse(" = 1").is_err());
    }

    #[test]
    fn floats_round_trip_exactly() {
        for x in [0.1, -1.0 / 3.0, 1e-300, f64::MAX, f64::MIN_POSITIVE, 0.0, -0.0] {
            let s = fmt_f64(x);
            assert_eq!(parse_f64(&s).unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(parse_f64(&fmt_f64(f64::INFINITY)), Some(f64::INFINITY));
        assert!(parse_f64(&fmt_f64(f64::NAN)).unwrap().is_nan());
    }
}
