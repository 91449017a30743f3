//! Flat `key = value` config files layered under command-line flags.
//!
//! Keys are flag names without the leading dashes (`lambda`, `train-ratio`).
//! Blank lines and lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

#[derive(Debug, Default)]
pub struct Layered {
    file: BTreeMap<String, (usize, String)>,
    consumed: Vec<String>,
}

impl Layered {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut file = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", i + 1))?;
            let key = key.trim().trim_start_matches("--").to_string();
            if file.insert(key.clone(), (i + 1, value.trim().to_string())).is_some() {
                bail!("line {}: duplicate key {key:?}", i + 1);
            }
        }
        Ok(Layered { file, consumed: Vec::new() })
    }

    /// The flag value if given, else the config file value, else `None`.
    pub fn get<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.consumed.push(key.to_string());
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("config line {line}: bad value {v:?} for {key}: {e}")),
        }
    }

    /// Boolean switches: a set flag wins, otherwise `true`/`false` from the file.
    pub fn switch(&mut self, key: &str, flag: bool) -> Result<bool> {
        Ok(self.get(key, flag.then_some(true))?.unwrap_or(false))
    }

    /// Fails on any file key no command read.
    pub fn finish(self) -> Result<()> {
        let unknown: Vec<&String> = self.file.keys().filter(|k| !self.consumed.contains(k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            bail!("unknown config keys: {unknown:?}")
        }
    }
}
