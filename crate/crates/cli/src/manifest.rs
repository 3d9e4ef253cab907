use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub subcommand: String,
    /// Fully resolved configuration of the run.
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<String>,
    /// Files written, relative to the run directory.
    pub outputs: Vec<String>,
    pub config_hash: String,
}

/// Hex SHA-256 of the subcommand name and the canonical JSON of `config`.
pub fn config_hash(subcommand: &str, config: &Value) -> String {
    let mut h = Sha256::new();
    h.update(subcommand.as_bytes());
    h.update([0]);
    h.update(config.to_string().as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// A run directory `<root>/<subcommand>-<hash prefix>` and the files
/// written into it.
pub struct Run {
    pub dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    pub fn create(root: &Path, subcommand: &str, config: Value, seeds: BTreeMap<String, u64>, inputs: Vec<String>) -> Result<Self> {
        let hash = config_hash(subcommand, &config);
        let dir = root.join(format!("{subcommand}-{}", &hash[..16]));
        std::fs::create_dir_all(&dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
        let manifest = RunManifest {
            tool: "dropsync".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            config,
            seeds,
            inputs,
            outputs: Vec::new(),
            config_hash: hash,
        };
        Ok(Self { dir, manifest })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn record(&mut self, name: &str) {
        if !self.manifest.outputs.iter().any(|o| o == name) {
            self.manifest.outputs.push(name.into());
        }
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.path(name);
        std::fs::write(&path, contents).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        self.record(name);
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::runtime(e.to_string()))?;
        self.write(name, text)
    }

    /// Register a file produced by other code.
    pub fn track(&mut self, name: &str) {
        self.record(name);
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.manifest.outputs.sort();
        let m = self.manifest.clone();
        self.write_json(MANIFEST_FILE, &m)?;
        Ok(self.dir)
    }
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}
