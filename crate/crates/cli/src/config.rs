//! Flat `key = value` settings: defaults, then the config file, then
//! `--set` pairs, then dedicated flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CliError, CliResult};

/// Every recognised key with its default. `auto` marks a value derived at
/// run time (the lengthscale defaults to `0.1·√d`).
pub const DEFAULTS: &[(&str, &str)] = &[
    ("adam_beta1", "0.9"),
    ("adam_beta2", "0.999"),
    ("adam_eps", "1e-8"),
    ("batch_size", "1024"),
    ("bounds", "-3,3,-3,3"),
    ("classes", "3"),
    ("delta", "0.001"),
    ("gen_kernel", "rbf"),
    ("gen_lengthscale", "1"),
    ("gen_variance", "1"),
    ("iterations", "5000"),
    ("kernel", "rbf"),
    ("label_column", "last"),
    ("learning_rate", "0.01"),
    ("lengthscale", "auto"),
    ("likelihood", "probit"),
    ("m", "32"),
    ("noise", "0.2"),
    ("normalize", "true"),
    ("per_class_kernels", "false"),
    ("predict_samples", "1000"),
    ("quadrature_order", "20"),
    ("record_wall_time", "false"),
    ("resolution", "50"),
    ("seed", "0"),
    ("trace_every", "100"),
    ("train_delta", "true"),
    ("train_inducing", "true"),
    ("train_kernel", "true"),
    ("variance", "5"),
];

/// Resolved settings, key-sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

fn check_key(key: &str) -> CliResult<()> {
    if DEFAULTS.iter().any(|(k, _)| *k == key) {
        Ok(())
    } else {
        Err(CliError::Args(format!("unknown config key '{key}'")))
    }
}

/// Parses `key = value` lines; blank lines and `#` lines are skipped.
pub fn parse_config_text(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Args(format!("config line {}: expected 'key = value'", i + 1))
        })?;
        let (k, v) = (k.trim(), v.trim());
        check_key(k).map_err(|e| CliError::Args(format!("config line {}: {e}", i + 1)))?;
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Parses a `--set key=value` argument.
pub fn parse_assignment(s: &str) -> CliResult<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Args(format!("expected key=value, got '{s}'")))?;
    let (k, v) = (k.trim(), v.trim());
    check_key(k)?;
    Ok((k.to_string(), v.to_string()))
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            values: DEFAULTS
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

impl Settings {
    /// Defaults overridden by the config file (if any) and then by `sets`.
    pub fn resolve(config: Option<&Path>, sets: &[(String, String)]) -> CliResult<Self> {
        let mut s = Self::default();
        if let Some(path) = config {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Args(format!("cannot read config {}: {e}", path.display()))
            })?;
            for (k, v) in parse_config_text(&text)? {
                s.values.insert(k, v);
            }
        }
        for (k, v) in sets {
            s.set(k, v)?;
        }
        Ok(s)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> CliResult<()> {
        check_key(key)?;
        self.values.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("unregistered key {key}"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<T> {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|_| CliError::Args(format!("invalid value '{raw}' for {key}")))
    }

    pub fn get_bool(&self, key: &str) -> CliResult<bool> {
        match self.raw(key).to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" | "on" => Ok(true),
            "false" | "no" | "0" | "off" => Ok(false),
            other => Err(CliError::Args(format!(
                "invalid boolean '{other}' for {key}"
            ))),
        }
    }

    /// `"a,b,c"` as numbers.
    pub fn get_list(&self, key: &str) -> CliResult<Vec<f64>> {
        self.raw(key)
            .split(',')
            .map(|p| {
                p.trim().parse().map_err(|_| {
                    CliError::Args(format!("invalid list '{}' for {key}", self.raw(key)))
                })
            })
            .collect()
    }

    /// `key = value` lines for the given keys, in sorted order.
    pub fn echo(&self, keys: &[&str]) -> Vec<String> {
        let mut keys: Vec<&str> = keys.to_vec();
        keys.sort_unstable();
        keys.iter()
            .map(|k| format!("{k} = {}", self.raw(k)))
            .collect()
    }

    pub fn subset(&self, keys: &[&str]) -> BTreeMap<String, String> {
        keys.iter()
            .map(|k| (k.to_string(), self.raw(k).to_string()))
            .collect()
    }
}
