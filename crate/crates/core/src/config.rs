//! Plain-text key-value configuration shared by the hand and linkage models.
//!
//! One `key = value` pair per line. `#` starts a comment. Keys are dotted
//! paths such as `index.proximal_mm` or `thumb.tm_flexion.limits_deg`.
//! Lists are comma separated. Lengths are given in millimetres and angles in
//! degrees; conversion to SI happens in the consuming module.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("duplicate key `{0}`")]
    Duplicate(String),
    #[error("key `{key}`: cannot parse `{value}`")]
    BadValue { key: String, value: String },
    #[error("key `{key}`: expected {expected} values, got {got}")]
    Arity { key: String, expected: usize, got: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        text.parse()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    /// Parses a scalar value if the key is present.
    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| ConfigError::BadValue {
                key: key.to_owned(),
                value: v.to_owned(),
            }),
        }
    }

    /// Parses a comma-separated list of exactly `n` floats if the key is present.
    pub fn floats(&self, key: &str, n: usize) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(raw) = self.get(key) else {
            return Ok(None);
        };
        let values = raw
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| ConfigError::BadValue {
                key: key.to_owned(),
                value: raw.to_owned(),
            })?;
        if values.len() != n {
            return Err(ConfigError::Arity {
                key: key.to_owned(),
                expected: n,
                got: values.len(),
            });
        }
        Ok(Some(values))
    }
}

impl FromStr for Config {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            if entries.insert(k.to_owned(), v.to_owned()).is_some() {
                return Err(ConfigError::Duplicate(k.to_owned()));
            }
        }
        Ok(Self { entries })
    }
}
