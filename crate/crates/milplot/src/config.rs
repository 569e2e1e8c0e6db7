//! Flat `key = value` config files with `#` comments.
//!
//! Documented keys, all optional:
//!
//! Corpus synthesis (`synth`):
//! - `families` (default 5), `samples_per_family_min`/`_max` (default 100),
//!   `size_min_bytes` (default 102400), `size_max_bytes` (default 409600),
//!   `test_fraction` (default 0.1), `seed` (default 1)
//!
//! Training (`train`):
//! - `epochs` (default 20), `accumulation_bags` (default 48),
//!   `sub_batch` (default 60), `k_top` (default 12; 0 disables top-k),
//!   `patch` (default 224), `learning_rate` (default 0.01),
//!   `seed` (default 1)

use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    BadLine { line: usize, text: String },
    #[error("key {key}: cannot parse {value:?} as {wanted}")]
    BadValue {
        key: String,
        value: String,
        wanted: &'static str,
    },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Parsed key-value pairs, insertion-order independent.
#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::BadLine {
                line: lineno + 1,
                text: raw.to_string(),
            })?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Config { values })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::parse(&text)
    }

    /// Reject keys outside the allowed set so config typos fail loudly
    /// instead of silently falling back to defaults.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        for key in self.values.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey(key.clone()));
            }
        }
        Ok(())
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        self.get_parsed(key, default, "unsigned integer")
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64, ConfigError> {
        self.get_parsed(key, default, "unsigned integer")
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        self.get_parsed(key, default, "real number")
    }

    pub fn get_f32(&self, key: &str, default: f32) -> Result<f32, ConfigError> {
        self.get_parsed(key, default, "real number")
    }

    fn get_parsed<T: std::str::FromStr>(
        &self,
        key: &str,
        default: T,
        wanted: &'static str,
    ) -> Result<T, ConfigError> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError::BadValue {
                key: key.to_string(),
                value: v.clone(),
                wanted,
            }),
        }
    }

    /// Snapshot of the parsed pairs for run manifests.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}
