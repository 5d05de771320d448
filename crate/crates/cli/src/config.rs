//! Plain-text `key = value` configuration with strict key checking and a
//! defaults < file < flags precedence chain, echoed to a run manifest.

use anyhow::{bail, Context};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// Ordered key/value configuration. Every effective value is recorded so a
/// run can be reproduced from its manifest alone.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    allowed: Vec<&'static str>,
}

impl RunConfig {
    /// Starts from defaults; `allowed` pins the full key set.
    pub fn new(defaults: &[(&'static str, String)]) -> Self {
        Self {
            values: defaults
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
            allowed: defaults.iter().map(|(k, _)| *k).collect(),
        }
    }

    fn check_key(&self, key: &str) -> anyhow::Result<()> {
        if self.allowed.iter().any(|k| *k == key) {
            Ok(())
        } else {
            bail!(
                "unknown configuration key '{key}' (valid keys: {})",
                self.allowed.join(", ")
            )
        }
    }

    /// Applies a config file (lower precedence than flags).
    pub fn apply_file(&mut self, path: &Path) -> anyhow::Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("config line {}: expected key=value", lineno + 1))?;
            let key = key.trim();
            self.check_key(key)?;
            self.values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(())
    }

    /// Applies a CLI flag override (highest precedence).
    pub fn set(&mut self, key: &str, value: impl ToString) -> anyhow::Result<()> {
        self.check_key(key)?;
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a flag only when present.
    pub fn set_opt<T: ToString>(&mut self, key: &str, value: &Option<T>) -> anyhow::Result<()> {
        if let Some(v) = value {
            self.set(key, v.to_string())?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> anyhow::Result<&str> {
        self.values
            .get(key)
            .map(|s| s.as_str())
            .with_context(|| format!("missing configuration key '{key}'"))
    }

    pub fn get_f64(&self, key: &str) -> anyhow::Result<f64> {
        self.get(key)?
            .parse()
            .with_context(|| format!("configuration key '{key}' is not a number"))
    }

    pub fn get_usize(&self, key: &str) -> anyhow::Result<usize> {
        self.get(key)?
            .parse()
            .with_context(|| format!("configuration key '{key}' is not an integer"))
    }

    pub fn get_u64(&self, key: &str) -> anyhow::Result<u64> {
        self.get(key)?
            .parse()
            .with_context(|| format!("configuration key '{key}' is not an integer"))
    }

    pub fn get_bool(&self, key: &str) -> anyhow::Result<bool> {
        match self.get(key)? {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => bail!("configuration key '{key}' is not a boolean: '{other}'"),
        }
    }

    /// Renders the effective configuration for `run_manifest.txt`.
    pub fn manifest(&self, command: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "command = {command}");
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Writes the manifest into the output directory.
    pub fn write_manifest(&self, out_dir: &Path, command: &str) -> anyhow::Result<()> {
        std::fs::create_dir_all(out_dir)?;
        std::fs::write(out_dir.join("run_manifest.txt"), self.manifest(command))?;
        Ok(())
    }
}
