//! Effective parameters: explicit flags over a config file over defaults.
//!
//! A config file is either `key=value` lines (keys are the long flag names)
//! or a `manifest.json` written by an earlier run. Every value a command
//! reads, default or not, is recorded so the manifest lists exactly what
//! the run used.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;

use crate::manifest::{InputRecord, Manifest};

pub const KEYS: &[&str] = &[
    "input",
    "tau",
    "norm-window",
    "stride",
    "coverage",
    "num-cps",
    "top-k",
    "band-multiplier",
    "start",
    "end",
    "onset",
    "tolerance-days",
    "budget-override",
    "svg",
];

#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
    /// Input hashes a manifest expects, by role.
    pub expected_inputs: BTreeMap<String, InputRecord>,
    used: RefCell<BTreeMap<String, String>>,
}

fn normalize_key(key: &str) -> String {
    key.trim().replace('_', "-")
}

fn check_key(key: &str, origin: &Path) -> Result<()> {
    if KEYS.contains(&key) {
        Ok(())
    } else {
        bail!("unknown key `{key}` in {}", origin.display())
    }
}

impl Settings {
    pub fn new(command: &str, flags: BTreeMap<String, String>, config: Option<&Path>) -> Result<Self> {
        let mut settings = Settings::default();
        if let Some(path) = config {
            settings.load_config(command, path)?;
        }
        settings.values.extend(flags);
        Ok(settings)
    }

    fn load_config(&mut self, command: &str, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        if text.trim_start().starts_with('{') {
            let manifest: Manifest = serde_json::from_str(&text)
                .with_context(|| format!("malformed manifest {}", path.display()))?;
            if manifest.command != command {
                bail!(
                    "manifest {} records a `{}` run, not `{command}`",
                    path.display(),
                    manifest.command
                );
            }
            for (key, value) in manifest.parameters {
                check_key(&key, path)?;
                self.values.insert(key, value);
            }
            self.expected_inputs = manifest.inputs;
            return Ok(());
        }
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}:{}: expected key=value", path.display(), no + 1))?;
            let key = normalize_key(key);
            check_key(&key, path)?;
            self.values.insert(key, value.trim().to_string());
        }
        Ok(())
    }

    /// Keys set explicitly that the command never read.
    pub fn unused(&self) -> Vec<String> {
        let used = self.used.borrow();
        self.values.keys().filter(|k| !used.contains_key(*k)).cloned().collect()
    }

    pub fn effective(&self) -> BTreeMap<String, String> {
        self.used.borrow().clone()
    }

    fn record(&self, key: &str, value: String) {
        self.used.borrow_mut().insert(key.to_string(), value);
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.values
            .get(key)
            .map(|raw| raw.parse::<T>().map_err(|e| anyhow!("invalid --{key} `{raw}`: {e}")))
            .transpose()
    }

    pub fn usize(&self, key: &str, default: usize) -> Result<usize> {
        let v = self.parse(key)?.unwrap_or(default);
        self.record(key, v.to_string());
        Ok(v)
    }

    pub fn u64(&self, key: &str, default: u64) -> Result<u64> {
        let v = self.parse(key)?.unwrap_or(default);
        self.record(key, v.to_string());
        Ok(v)
    }

    pub fn f64(&self, key: &str, default: f64) -> Result<f64> {
        let v: f64 = self.parse(key)?.unwrap_or(default);
        if !v.is_finite() {
            bail!("--{key} must be finite");
        }
        self.record(key, v.to_string());
        Ok(v)
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        let v = self.parse(key)?.unwrap_or(false);
        self.record(key, v.to_string());
        Ok(v)
    }

    pub fn date(&self, key: &str) -> Result<Option<NaiveDate>> {
        let v: Option<NaiveDate> = self.parse(key)?;
        if let Some(d) = v {
            self.record(key, d.to_string());
        }
        Ok(v)
    }

    pub fn required_date(&self, key: &str) -> Result<NaiveDate> {
        self.date(key)?.ok_or_else(|| anyhow!("--{key} is required"))
    }

    /// Absolute input path, so a manifest can be replayed from anywhere.
    pub fn input(&self) -> Result<PathBuf> {
        let raw = self.values.get("input").ok_or_else(|| anyhow!("--input is required"))?;
        let path = PathBuf::from(raw);
        let abs = if path.is_absolute() {
            path
        } else {
            std::env::current_dir().context("cannot resolve the working directory")?.join(path)
        };
        self.record("input", abs.display().to_string());
        Ok(abs)
    }
}
