//! Flat `key = value` configuration with per-command defaults.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Clone, Debug)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn new(defaults: &[(&str, &str)]) -> Self {
        Self {
            values: defaults
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    /// Reads `key = value` lines; blank lines and `#` comments are skipped.
    pub fn load_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.assign(line)
                .map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), no + 1)))?;
        }
        Ok(())
    }

    pub fn assign(&mut self, pair: &str) -> Result<(), CliError> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected key=value, got '{pair}'")))?;
        let key = key.trim();
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.trim().to_string();
                Ok(())
            }
            None => Err(CliError::Usage(format!(
                "unknown key '{key}'; known keys: {}",
                self.values.keys().cloned().collect::<Vec<_>>().join(", ")
            ))),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let raw = self
            .values
            .get(key)
            .ok_or_else(|| CliError::Usage(format!("missing key '{key}'")))?;
        raw.parse()
            .map_err(|e| CliError::Usage(format!("bad value for {key} = '{raw}': {e}")))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: Display,
    {
        let raw: String = self.get(key)?;
        raw.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|e| CliError::Usage(format!("bad entry '{s}' in {key}: {e}")))
            })
            .collect()
    }

    pub fn echo(&self) -> BTreeMap<String, String> {
        self.values.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_and_lists() {
        let mut c = Config::new(&[("n", "4"), ("grid", "1,2")]);
        c.assign("n = 9").unwrap();
        assert_eq!(c.get::<usize>("n").unwrap(), 9);
        assert_eq!(c.list::<f64>("grid").unwrap(), vec![1.0, 2.0]);
        assert!(c.assign("bogus=1").is_err());
        assert!(c.assign("novalue").is_err());
        c.assign("n=x").unwrap();
        assert!(c.get::<usize>("n").is_err());
    }
}
