//! Flat `key=value` files used for run configs and sidecars.
//!
//! One pair per line; blank lines and lines starting with `#` are ignored.
//! Keys keep their insertion order so writes are reproducible.

use std::fmt::Write as _;

#[derive(Debug, Clone, Default)]
pub struct KvFile {
    entries: Vec<(String, String)>,
}

/// Parse failure with the 1-based line number, as required for config errors.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct KvParseError {
    pub line: usize,
    pub message: String,
}

impl KvFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, KvParseError> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) if !k.trim().is_empty() => {
                    entries.push((k.trim().to_string(), v.trim().to_string()));
                }
                _ => {
                    return Err(KvParseError {
                        line: idx + 1,
                        message: format!("expected key=value, got {raw:?}"),
                    })
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some((_, v)) => *v = value,
            None => self.entries.push((key.to_string(), value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Option<Result<T, String>> {
        self.get(key).map(|v| {
            v.parse::<T>()
                .map_err(|_| format!("key {key}: cannot parse {v:?} as {}", std::any::type_name::<T>()))
        })
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }
}
