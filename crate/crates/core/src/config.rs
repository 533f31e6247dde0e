//! Plain-text `key = value` configuration with `[section]` headers.
//!
//! Keys inside a section are stored as `section.key`. Any key can be
//! overridden from the environment: `check.depth` is read from
//! `HPSHIELD_CHECK_DEPTH` (dots and dashes become underscores).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::exec::{inclusive_range, BoundedCheckConfig, ExecError, FlowOptions, InitialGrid, State};
use crate::lang::{parse_term, Formula};
use crate::scalar::Scalar;

pub const ENV_PREFIX: &str = "HPSHIELD";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("`{key}`: {message}")]
    Value { key: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl ConfigError {
    fn value(key: &str, message: impl fmt::Display) -> Self {
        ConfigError::Value { key: key.to_string(), message: message.to_string() }
    }
}

impl From<(String, ExecError)> for ConfigError {
    fn from((key, e): (String, ExecError)) -> Self {
        ConfigError::Value { key, message: e.to_string() }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

/// Environment variable consulted for `key`.
pub fn env_var_name(key: &str) -> String {
    let mut name = String::from(ENV_PREFIX);
    name.push('_');
    name.extend(key.chars().map(|c| if c == '.' || c == '-' { '_' } else { c.to_ascii_uppercase() }));
    name
}

impl Config {
    pub fn new() -> Self {
        Config::default()
    }

    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut cfg = Config::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::Syntax { line: i + 1, message: "unterminated section header".into() })?
                    .trim();
                if name.is_empty() {
                    return Err(ConfigError::Syntax { line: i + 1, message: "empty section name".into() });
                }
                section = name.to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: i + 1, message: format!("expected `key = value`, got `{line}`") })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1, message: "empty key".into() });
            }
            let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
            cfg.entries.insert(key, v.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Config::parse(&text)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    /// Fills `key` only if nothing set it yet.
    pub fn set_default(&mut self, key: &str, value: impl Into<String>) {
        self.entries.entry(key.to_string()).or_insert_with(|| value.into());
    }

    /// Applies environment overrides for every key already present plus
    /// `extra_keys`, using `lookup` to read variables.
    pub fn apply_env_with(&mut self, extra_keys: &[&str], lookup: impl Fn(&str) -> Option<String>) {
        let mut keys: Vec<String> = self.entries.keys().cloned().collect();
        keys.extend(extra_keys.iter().map(|k| k.to_string()));
        for key in keys {
            if let Some(v) = lookup(&env_var_name(&key)) {
                self.entries.insert(key, v);
            }
        }
    }

    pub fn apply_env(&mut self, extra_keys: &[&str]) {
        self.apply_env_with(extra_keys, |name| std::env::var(name).ok());
    }

    /// Copies every entry of `other` over this one.
    pub fn merge(&mut self, other: &Config) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.raw(key).map(|v| v.parse::<T>().map_err(|e| ConfigError::value(key, e))).transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list value.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.raw(key).map(|v| parse_list(key, v)).transpose()
    }

    /// Entries whose key starts with `prefix.`, with the prefix removed.
    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
        self.entries.iter().filter_map(move |(k, v)| {
            k.strip_prefix(prefix).and_then(|rest| rest.strip_prefix('.')).map(|rest| (rest, v.as_str()))
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| ConfigError::value(key, format!("`{s}`: {e}"))))
        .collect()
}

/// Either `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_values<S: Scalar>(key: &str, v: &str) -> Result<Vec<S>, ConfigError> {
    let parts: Vec<&str> = v.split(':').map(str::trim).collect();
    let nums = |parts: &[&str]| -> Result<Vec<f64>, ConfigError> {
        parts.iter().map(|p| p.parse::<f64>().map_err(|e| ConfigError::value(key, format!("`{p}`: {e}")))).collect()
    };
    match parts.len() {
        1 => Ok(parse_list::<f64>(key, v)?.into_iter().map(S::lit).collect()),
        3 => {
            let n = nums(&parts)?;
            inclusive_range(S::lit(n[0]), S::lit(n[1]), S::lit(n[2])).map_err(|e| ConfigError::value(key, e))
        }
        _ => Err(ConfigError::value(key, "expected a list or start:stop:step")),
    }
}

impl<S: Scalar> BoundedCheckConfig<S> {
    /// Reads the `section` of `cfg`:
    ///
    /// ```text
    /// [check]
    /// depth = 20
    /// dwell_times = 0.25*eps, 0.5*eps, eps
    /// budget = 20000000
    /// step = 0.001
    /// grid.x = 0:90:10
    /// const.m = 100
    /// sample.y = 0, 1, 2
    /// ```
    ///
    /// Initial states are the grid points (over `grid.*`, merged with
    /// `const.*`) that satisfy `init`.
    pub fn from_config(cfg: &Config, section: &str, init: &Formula) -> Result<Self, ConfigError> {
        let key = |k: &str| format!("{section}.{k}");
        let depth = cfg.get_or(&key("depth"), 20usize)?;
        let budget = cfg.get_or(&key("budget"), 20_000_000usize)?;
        let mut flow = FlowOptions::<S>::default();
        if let Some(step) = cfg.get::<f64>(&key("step"))? {
            flow.step = S::lit(step);
        }
        if let Some(tol) = cfg.get::<f64>(&key("event_tolerance"))? {
            flow.event_tolerance = S::lit(tol);
        }
        let dwell_src = cfg.raw(&key("dwell_times")).unwrap_or("eps");
        let dwell_times = dwell_src
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| parse_term(s).map_err(|e| ConfigError::value(&key("dwell_times"), e.render(s))))
            .collect::<Result<Vec<_>, _>>()?;
        let mut grid = InitialGrid::<S> { axes: Vec::new(), constants: State::new() };
        let mut samples = Vec::new();
        for (k, v) in cfg.with_prefix(section) {
            if let Some(var) = k.strip_prefix("grid.") {
                grid.axes.push((var.to_string(), parse_values(&key(k), v)?));
            } else if let Some(var) = k.strip_prefix("const.") {
                let c: f64 = v.parse().map_err(|e| ConfigError::value(&key(k), e))?;
                grid.constants.set(var, S::lit(c)).map_err(|e| (key(k), e))?;
            } else if let Some(var) = k.strip_prefix("sample.") {
                samples.push((var.to_string(), parse_values(&key(k), v)?));
            }
        }
        let initial_states = grid.states(init).map_err(|e| (key("grid"), e))?;
        Ok(BoundedCheckConfig { depth, samples, dwell_times, initial_states, budget, flow })
    }
}
