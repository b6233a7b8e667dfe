use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    /// Metric tables are compared on replay; binary fields and plot scripts are not.
    pub metric: bool,
}

/// Persisted description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: String,
    pub command: String,
    /// Canonical TOML of the effective config, overrides applied.
    pub config: String,
    pub config_hash: String,
    pub master_seed: u64,
    /// Seconds since the Unix epoch.
    pub started: u64,
    pub finished: u64,
    pub exit_code: i32,
    pub manifest: Vec<ManifestEntry>,
    pub summary: serde_json::Value,
    pub warnings: Vec<String>,
}

pub const RECORD_FILE: &str = "run.json";

pub fn version_string() -> String {
    format!("spdelab {}", env!("CARGO_PKG_VERSION"))
}

pub(crate) fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl RunRecord {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(dir.join(RECORD_FILE), text)?;
        Ok(())
    }

    /// Whether `config_hash` matches the stored snapshot.
    pub fn hash_matches(&self) -> bool {
        sha256_hex(self.config.as_bytes()) == self.config_hash
    }

    pub fn metric_tables(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.manifest.iter().filter(|m| m.metric)
    }
}
