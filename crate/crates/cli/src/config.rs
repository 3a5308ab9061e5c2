//! Flat `key = value` configuration with section-prefixed keys.

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: expected `key = value`")]
    Malformed { line: usize },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { key: String, line: usize },
    #[error("key `{key}`: cannot parse `{value}`")]
    BadValue { key: String, value: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    /// Parses `text`, accepting only keys listed in `allowed`.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str, allowed: &[&str]) -> Result<Config, ConfigError> {
        let mut entries = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            let (key, value) = s.split_once('=').ok_or(ConfigError::Malformed { line })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Malformed { line });
            }
            if !allowed.contains(&key) {
                return Err(ConfigError::UnknownKey { key: key.to_string(), line });
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(ConfigError::Duplicate { key: key.to_string(), line });
            }
        }
        Ok(Config { entries })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get_str<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.entries.get(key).map_or(default, String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        match self.entries.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError::BadValue { key: key.to_string(), value: v.clone() }),
        }
    }

    /// Comma-separated reals.
    pub fn get_vec3(&self, key: &str, default: [f64; 3]) -> Result<[f64; 3], ConfigError> {
        let Some(v) = self.entries.get(key) else { return Ok(default) };
        let bad = || ConfigError::BadValue { key: key.to_string(), value: v.clone() };
        let parts: Vec<f64> = v.split(',').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
        parts.try_into().map_err(|_| bad())
    }
}

pub const SOLVER_KEYS: &[&str] = &[
    "solver.max_iters",
    "solver.step",
    "solver.backtrack",
    "solver.max_backtracks",
    "solver.armijo",
    "solver.energy_window",
    "solver.seed",
    "tol.grad",
    "tol.energy",
    "tol.tangency",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects() {
        let c = Config::parse("# c\n grid.m = 64\n\nsolver.step=0.5\n", &["grid.m", "solver.step"]).unwrap();
        assert_eq!(c.get("grid.m", 1usize).unwrap(), 64);
        assert_eq!(c.get("solver.step", 1.0).unwrap(), 0.5);
        assert_eq!(c.get("missing", 3.0).unwrap(), 3.0);
        assert_eq!(
            Config::parse("grid.q = 1", &["grid.m"]),
            Err(ConfigError::UnknownKey { key: "grid.q".into(), line: 1 })
        );
        assert_eq!(Config::parse("grid.m", &["grid.m"]), Err(ConfigError::Malformed { line: 1 }));
        assert!(matches!(Config::parse("a=1\na=2", &["a"]), Err(ConfigError::Duplicate { .. })));
        let c = Config::parse("a = x", &["a"]).unwrap();
        assert!(c.get("a", 1usize).is_err());
    }

    #[test]
    fn vectors() {
        let c = Config::parse("center = 0, 0.5, 1", &["center"]).unwrap();
        assert_eq!(c.get_vec3("center", [0.0; 3]).unwrap(), [0.0, 0.5, 1.0]);
        let c = Config::parse("center = 0, 1", &["center"]).unwrap();
        assert!(c.get_vec3("center", [0.0; 3]).is_err());
    }
}
