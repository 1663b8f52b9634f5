//! Flat `key = value` experiment configuration.
//!
//! Lines starting with `#` are comments. Every key must be one of [`KEYS`];
//! unknown keys are rejected so a typo never silently falls back to a default.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown configuration key {0:?}")]
    UnknownKey(String),
    #[error("key {key:?} given twice (lines {first} and {second})")]
    Duplicate { key: String, first: usize, second: usize },
    #[error("key {key:?}: cannot parse {value:?} as {expected}")]
    Value { key: String, value: String, expected: &'static str },
    #[error("key {key:?}: {reason}")]
    Invalid { key: String, reason: String },
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}

pub type ConfigResult<T> = std::result::Result<T, ConfigError>;

/// Recognised keys with their default values.
pub const KEYS: &[(&str, &str)] = &[
    ("experiment.kind", ""),
    ("seed", "0"),
    ("outdir", "out"),
    ("domain.kind", "interval"),
    ("domain.n", "65"),
    ("domain.nx", "16"),
    ("domain.ny", "17"),
    ("domain.Lx", "2"),
    ("potential.kind", "logarithmic"),
    ("potential.kappa0", "0"),
    ("potential.kappa1", "1"),
    ("potential.kappa", "1"),
    ("potential.p", "3"),
    ("potential.a", "1"),
    ("potential.lambda", "0"),
    ("potential.g", "linear"),
    ("potential.g_param", "0.5"),
    ("regularization.N", "16"),
    ("solver.dt", "0.001"),
    ("solver.T", "1"),
    ("solver.cadence", "0.1"),
    ("solver.newton_tol", "1e-10"),
    ("solver.newton_max_iter", "50"),
    ("forcing.h1", "0"),
    ("forcing.h2", "0"),
    ("forcing.h2_layout", "uniform"),
    ("initial.kind", "cosine"),
    ("initial.amplitude", "0.05"),
    ("initial.mode", "0.5"),
    ("initial.mass", "0"),
    ("initial.trace_offset", "0"),
    ("initial.file", ""),
    ("experiment.N_list", "4,8,16,32,64"),
    ("experiment.times", "0.1,0.5,1.0"),
    ("experiment.eps_list", "1e-2,1e-3,1e-4"),
    ("experiment.ensemble", "6"),
    ("experiment.h2_satisfied", "0"),
    ("experiment.h2_violating", "3"),
    ("experiment.sign_eps", "0.1"),
    ("experiment.K", "1"),
    ("experiment.sweep", ""),
];

fn is_known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

/// A fully resolved configuration: defaults overlaid with the given entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self { values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> ConfigResult<Self> {
        let mut cfg = Self::default();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax { line: i + 1, text: raw.to_string() });
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1, text: raw.to_string() });
            }
            if let Some(&first) = seen.get(k) {
                return Err(ConfigError::Duplicate { key: k.to_string(), first, second: i + 1 });
            }
            seen.insert(k.to_string(), i + 1);
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> ConfigResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), reason: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> ConfigResult<()> {
        if !is_known(key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("key {key} is not registered"))
    }

    pub fn f64(&self, key: &str) -> ConfigResult<f64> {
        let v = self.get(key);
        v.parse().map_err(|_| ConfigError::Value { key: key.into(), value: v.into(), expected: "a number" })
    }

    pub fn usize(&self, key: &str) -> ConfigResult<usize> {
        let v = self.get(key);
        v.parse().map_err(|_| ConfigError::Value { key: key.into(), value: v.into(), expected: "a non-negative integer" })
    }

    pub fn u64(&self, key: &str) -> ConfigResult<u64> {
        let v = self.get(key);
        v.parse().map_err(|_| ConfigError::Value { key: key.into(), value: v.into(), expected: "a non-negative integer" })
    }

    pub fn f64_list(&self, key: &str) -> ConfigResult<Vec<f64>> {
        let v = self.get(key);
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| ConfigError::Value { key: key.into(), value: v.into(), expected: "a comma-separated list of numbers" }))
            .collect()
    }

    pub fn u32_list(&self, key: &str) -> ConfigResult<Vec<u32>> {
        let v = self.get(key);
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| ConfigError::Value { key: key.into(), value: v.into(), expected: "a comma-separated list of integers" }))
            .collect()
    }

    /// Serialises every resolved key; the output parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, _) in KEYS {
            let _ = writeln!(out, "{k} = {}", self.get(k));
        }
        out
    }
}
