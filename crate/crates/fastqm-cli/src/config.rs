//! Flat key=value configuration files.
//!
//! Keys use the long flag names (e.g. `grad-tol = 2e-4`). Values given on
//! the command line win over the config file, which wins over built-in
//! defaults.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use fastqm::{Error, Result};

#[derive(Debug, Default)]
pub struct ConfigMap {
    entries: HashMap<String, String>,
}

impl ConfigMap {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(ConfigMap::default());
        };
        let text = std::fs::read_to_string(path)?;
        let mut entries = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::format(format!(
                    "{}:{}: expected 'key = value', found '{line}'",
                    path.display(),
                    lineno + 1
                ))
            })?;
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(ConfigMap { entries })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::invalid(format!("config key '{key}': cannot parse value '{raw}'"))
            }),
        }
    }

    /// Flag value if given, else config value, else the default.
    pub fn resolve<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Like [`resolve`](Self::resolve) but the value must come from the
    /// flag or the config file.
    pub fn resolve_required<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        self.get(key)?
            .ok_or_else(|| Error::invalid(format!("missing required option '--{key}'")))
    }
}
