//! Flat key-value config files with flag-override semantics.
//!
//! One assignment per line, `key = value`, `#` comments. Keys mirror the
//! command-line flag names. A value from the file is used only when the
//! corresponding flag is absent; unknown keys are rejected by name.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use dilperc::{Error, Result};

#[derive(Debug, Default)]
pub struct FileConfig {
    map: HashMap<String, String>,
}

impl FileConfig {
    /// Parse `path` and validate every key against `allowed`.
    pub fn load(path: Option<&Path>, allowed: &[&str]) -> Result<FileConfig> {
        let mut map = HashMap::new();
        let Some(path) = path else {
            return Ok(FileConfig { map });
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parameter(format!("config file {}: {e}", path.display())))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parameter(format!(
                    "config line {} is not `key = value`: `{raw}`",
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Parameter(format!(
                    "unknown config key `{key}` (allowed: {})",
                    allowed.join(", ")
                )));
            }
            if map.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::Parameter(format!("duplicate config key `{key}`")));
            }
        }
        Ok(FileConfig { map })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::Parameter(format!("config key `{key}`: cannot parse `{raw}`"))
            }),
        }
    }

    /// Flag value, else file value, else default.
    pub fn resolve<T: FromStr + Clone>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T> {
        Ok(flag.or(self.get(key)?).unwrap_or(default))
    }

    /// Flag value, else file value, else an error naming the key.
    pub fn require<T: FromStr + Clone>(&self, flag: Option<T>, key: &str) -> Result<T> {
        self.resolve_opt(flag, key)?
            .ok_or_else(|| Error::Parameter(format!("missing required parameter `{key}`")))
    }

    pub fn resolve_opt<T: FromStr + Clone>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        Ok(flag.or(self.get(key)?))
    }
}

/// Comma-separated list of system sizes, e.g. `8,12,16,20`.
pub fn parse_n_list(raw: &str) -> Result<Vec<usize>> {
    let list: Vec<usize> = raw
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Parameter(format!("bad N in list: `{s}`")))
        })
        .collect::<Result<_>>()?;
    if list.is_empty() {
        return Err(Error::Parameter("empty N list".into()));
    }
    Ok(list)
}
