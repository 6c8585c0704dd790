//! Flat `key=value` settings files and their merge with command-line flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{io_err, CliError};

/// Every key a settings file may contain. One file can serve all commands.
pub const KNOWN_KEYS: &[&str] = &[
    "ablation",
    "bptt",
    "embed",
    "enrich-p-harmony",
    "enrich-p-melody",
    "epochs",
    "grad-clip",
    "hand",
    "hidden",
    "layers",
    "lr",
    "mode",
    "no-enrich",
    "num-notes",
    "prompt-bars",
    "prompt-notes",
    "scale",
    "seed",
    "top-k",
    "upc",
];

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<ConfigFile, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::BadConfig(format!("line {}: expected key=value", i + 1)))?;
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::BadConfig(format!("line {}: unknown key `{key}`", i + 1)));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn load(path: Option<&Path>) -> Result<ConfigFile, CliError> {
        match path {
            None => Ok(ConfigFile::default()),
            Some(p) => ConfigFile::parse(&std::fs::read_to_string(p).map_err(io_err(p))?),
        }
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| CliError::BadConfig(format!("{key}={v}: {e}"))))
            .transpose()
    }
}

/// Resolves settings in precedence order and records what was used.
pub struct Resolver<'a> {
    file: &'a ConfigFile,
    used: Vec<(String, String)>,
}

impl<'a> Resolver<'a> {
    pub fn new(file: &'a ConfigFile) -> Self {
        Resolver { file, used: Vec::new() }
    }

    /// Flag, else config file, else default.
    pub fn value<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => v,
            None => self.file.get(key)?.unwrap_or(default),
        };
        self.used.push((key.to_string(), v.to_string()));
        Ok(v)
    }

    /// Like [`Resolver::value`] for settings with no default.
    pub fn optional<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => self.file.get(key)?,
        };
        if let Some(v) = &v {
            self.used.push((key.to_string(), v.to_string()));
        }
        Ok(v)
    }

    /// Boolean switch: set by the flag or by `key=true` in the file.
    pub fn switch(&mut self, key: &str, flag: bool) -> Result<bool, CliError> {
        let v = flag || self.file.get::<bool>(key)?.unwrap_or(false);
        self.used.push((key.to_string(), v.to_string()));
        Ok(v)
    }

    /// Record a setting that is not resolvable from the file (paths, names).
    pub fn note(&mut self, key: &str, value: impl Display) {
        self.used.push((key.to_string(), value.to_string()));
    }

    pub fn render(&self) -> String {
        self.used.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.render()).map_err(io_err(path))
    }
}
