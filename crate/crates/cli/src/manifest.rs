//! Per-run bookkeeping: hashed inputs, written outputs and `manifest.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use trendscan::io::{hash_file, sha256_hex};

use crate::settings::Settings;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to replay a run. The output directory and worker
/// count are left out: neither changes a single output byte.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub parameters: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, InputRecord>,
    pub outputs: BTreeMap<String, String>,
}

pub struct Run {
    pub command: &'static str,
    pub settings: Settings,
    pub workers: Option<usize>,
    out_dir: PathBuf,
    inputs: BTreeMap<String, InputRecord>,
    outputs: BTreeMap<String, String>,
}

impl Run {
    pub fn new(command: &'static str, settings: Settings, out_dir: PathBuf, workers: Option<usize>) -> Result<Self> {
        std::fs::create_dir_all(&out_dir)
            .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
        Ok(Run {
            command,
            settings,
            workers,
            out_dir,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    /// Hashes an input file and checks it against a replayed manifest.
    pub fn register_input(&mut self, role: &str, path: &Path) -> Result<String> {
        let sha256 = hash_file(path)?;
        if let Some(expected) = self.settings.expected_inputs.get(role) {
            if expected.sha256 != sha256 {
                bail!(
                    "{} changed since the manifest was written (sha256 {} != {})",
                    path.display(),
                    sha256,
                    expected.sha256
                );
            }
        }
        self.inputs.insert(
            role.to_string(),
            InputRecord {
                path: path.display().to_string(),
                sha256: sha256.clone(),
            },
        );
        Ok(sha256)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.path(name);
        std::fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        self.outputs.insert(name.to_string(), sha256_hex(contents.as_bytes()));
        Ok(())
    }

    /// Records a file some other writer already put in the output directory.
    pub fn track(&mut self, name: &str) -> Result<()> {
        let sha = hash_file(self.path(name))?;
        self.outputs.insert(name.to_string(), sha);
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        for key in self.settings.unused() {
            eprintln!("warning: `{key}` does not apply to `{}` and was ignored", self.command);
        }
        let manifest = Manifest {
            tool: "trendscan".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command.into(),
            parameters: self.settings.effective(),
            inputs: self.inputs,
            outputs: self.outputs,
        };
        let path = self.out_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
    }
}
