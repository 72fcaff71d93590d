//! Plain-text `key = value` configuration.
//!
//! Keys are the long CLI flag names without the leading dashes, e.g.
//! `per-class = 500`. Blank lines and lines starting with `#` are ignored.
//! Boolean flags take `true` or `false`. Flags given on the command line
//! override values from the file.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::read_file;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PipelineConfig {
    entries: Vec<(String, String)>,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", n + 1)));
            }
            if entries.iter().any(|(k, _)| k == key) {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", n + 1)));
            }
            entries.push((key.to_string(), value.to_string()));
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = read_file(path.as_ref())?;
        let text = String::from_utf8(bytes).map_err(|_| Error::Config("config file is not UTF-8".into()))?;
        Self::parse(&text)
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Errors on the first key not in `known`.
    pub fn check_keys<'a>(&self, known: impl IntoIterator<Item = &'a str> + Clone) -> Result<()> {
        for (key, _) in &self.entries {
            if !known.clone().into_iter().any(|k| k == key) {
                return Err(Error::Config(format!("unknown key {key:?}")));
            }
        }
        Ok(())
    }
}
