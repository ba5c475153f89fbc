//! Key=value run configuration: optional config files, flag override
//! semantics, and `--dump-config` round-tripping.
//!
//! Every subcommand resolves its settings through a [`Resolver`]: values
//! start from the config file (when given), explicit flags win, defaults
//! fill the rest. Unknown keys in a file are rejected so typos fail loudly.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Usage-class failure: wrong flags, bad values, malformed config.
/// Exits with code 2, runtime failures exit with 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

/// Parsed key=value file, order-insensitive.
#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut values = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value", idx + 1))?;
            if values
                .insert(key.trim().to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(format!("line {}: duplicate key '{}'", idx + 1, key.trim()));
            }
        }
        Ok(ConfigFile { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }
}

/// Merges flag values over config-file values, records the resolved pairs
/// for `--dump-config`, and tracks which file keys were consumed.
pub struct Resolver {
    file: ConfigFile,
    used: Vec<String>,
    resolved: BTreeMap<String, String>,
}

impl Resolver {
    pub fn new(config_path: Option<&PathBuf>) -> anyhow::Result<Self> {
        let file = match config_path {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        Ok(Resolver {
            file,
            used: Vec::new(),
            resolved: BTreeMap::new(),
        })
    }

    fn record(&mut self, key: &str, value: impl Display) {
        self.resolved.insert(key.to_string(), value.to_string());
    }

    fn file_value<T: FromStr>(&mut self, key: &str) -> anyhow::Result<Option<T>> {
        match self.file.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| usage(format!("config key '{key}': cannot parse '{raw}'"))),
        }
    }

    /// Every accessor declares its key up front, so a file value shadowed
    /// by a flag still counts as recognized.
    fn know(&mut self, key: &str) {
        self.used.push(key.to_string());
    }

    /// Required setting: flag wins, then config file; absent -> usage error.
    pub fn required<T: FromStr + Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
    ) -> anyhow::Result<T> {
        self.know(key);
        let v = match flag {
            Some(v) => v,
            None => self
                .file_value::<T>(key)?
                .ok_or_else(|| usage(format!("missing required setting --{key}")))?,
        };
        self.record(key, &v);
        Ok(v)
    }

    /// Optional setting with a default.
    pub fn or_default<T: FromStr + Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> anyhow::Result<T> {
        self.know(key);
        let v = match flag {
            Some(v) => v,
            None => self.file_value::<T>(key)?.unwrap_or(default),
        };
        self.record(key, &v);
        Ok(v)
    }

    /// Optional setting with no default.
    pub fn optional<T: FromStr + Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
    ) -> anyhow::Result<Option<T>> {
        self.know(key);
        let v = match flag {
            Some(v) => Some(v),
            None => self.file_value::<T>(key)?,
        };
        if let Some(v) = &v {
            self.record(key, v);
        }
        Ok(v)
    }

    /// Boolean switch: a bare flag turns it on, the file may say true/false.
    pub fn switch(&mut self, key: &str, flag: bool, default: bool) -> anyhow::Result<bool> {
        self.know(key);
        let v = if flag {
            true
        } else {
            self.file_value::<bool>(key)?.unwrap_or(default)
        };
        self.record(key, v);
        Ok(v)
    }

    /// List setting: repeated flags win over a comma-separated file value.
    pub fn list(&mut self, key: &str, flag: &[String]) -> anyhow::Result<Vec<String>> {
        self.know(key);
        let v: Vec<String> = if !flag.is_empty() {
            flag.to_vec()
        } else {
            match self.file.get(key) {
                Some(raw) => {
                    raw.split(',')
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect()
                }
                None => Vec::new(),
            }
        };
        self.record(key, v.join(","));
        Ok(v)
    }

    /// Fails on config keys nothing consumed, then optionally dumps the
    /// resolved configuration for reproducible re-runs.
    pub fn finish(self, dump: Option<&PathBuf>) -> anyhow::Result<()> {
        for key in self.file.values.keys() {
            if !self.used.contains(key) {
                return Err(usage(format!("unknown config key '{key}'")));
            }
        }
        if let Some(path) = dump {
            let mut out = String::new();
            for (k, v) in &self.resolved {
                out.push_str(&format!("{k}={v}\n"));
            }
            chanlingo_core::io_util::write_atomic(path, out.as_bytes())?;
        }
        Ok(())
    }
}
