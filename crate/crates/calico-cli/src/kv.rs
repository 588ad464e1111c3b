//! Key=value settings: a config file layered under command-line flags.
//!
//! A settings file holds one `key = value` pair per line (`#` starts a
//! comment). Keys use the long flag names of the command being run, without
//! the leading dashes. Flags always win over the file; the file wins over
//! built-in defaults. Every resolved value is recorded so the run manifest
//! can snapshot the effective configuration, and unknown keys are rejected
//! to catch typos.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use calico::{Error, Result};

pub struct Settings {
    file: BTreeMap<String, String>,
    used: BTreeSet<String>,
    snapshot: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut file = BTreeMap::new();
        if let Some(path) = path {
            let display = path.display().to_string();
            let body =
                std::fs::read_to_string(path).map_err(|e| Error::io(display.clone(), e))?;
            for (lineno, raw) in body.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    Error::Config(format!(
                        "{display}:{}: expected `key = value`, got `{raw}`",
                        lineno + 1
                    ))
                })?;
                let key = key.trim().to_string();
                if file.insert(key.clone(), value.trim().to_string()).is_some() {
                    return Err(Error::Config(format!(
                        "{display}:{}: duplicate key `{key}`",
                        lineno + 1
                    )));
                }
            }
        }
        Ok(Settings {
            file,
            used: BTreeSet::new(),
            snapshot: BTreeMap::new(),
        })
    }

    fn file_value<T>(&mut self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.used.insert(key.to_string());
        match self.file.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|e| {
                Error::Config(format!("config key `{key}`: cannot parse `{raw}`: {e}"))
            }),
        }
    }

    /// Flag value, else file value, else the default. Records the winner.
    /// The file value is parsed (and so validated) even when a flag wins.
    pub fn resolve<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + ToString,
        T::Err: Display,
    {
        let file = self.file_value(key)?;
        let value = flag.or(file).unwrap_or(default);
        self.snapshot.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    /// Like [`Settings::resolve`] but with no default; absent stays absent.
    pub fn resolve_opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + ToString,
        T::Err: Display,
    {
        let file = self.file_value(key)?;
        let value = flag.or(file);
        if let Some(v) = &value {
            self.snapshot.insert(key.to_string(), v.to_string());
        }
        Ok(value)
    }

    /// A boolean switch: true when the flag was passed, else the file value.
    pub fn resolve_switch(&mut self, key: &str, flag: bool) -> Result<bool> {
        let value = flag || self.file_value(key)?.unwrap_or(false);
        self.snapshot.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    /// Seed precedence: flag, then file, then `CALICO_SEED`, then 0.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> Result<u64> {
        let file = self.file_value::<u64>("seed")?;
        let value = match flag.or(file) {
            Some(v) => v,
            None => match std::env::var("CALICO_SEED") {
                Ok(raw) => raw.parse::<u64>().map_err(|e| {
                    Error::Config(format!("CALICO_SEED: cannot parse `{raw}`: {e}"))
                })?,
                Err(_) => 0,
            },
        };
        self.snapshot.insert("seed".to_string(), value.to_string());
        Ok(value)
    }

    /// Reject unconsumed file keys and hand back the effective configuration.
    pub fn finish(self) -> Result<BTreeMap<String, String>> {
        let unknown: Vec<&String> =
            self.file.keys().filter(|k| !self.used.contains(*k)).collect();
        if !unknown.is_empty() {
            let list: Vec<&str> = unknown.iter().map(|s| s.as_str()).collect();
            return Err(Error::Config(format!(
                "unknown config keys for this command: {}",
                list.join(", ")
            )));
        }
        Ok(self.snapshot)
    }
}
