use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Record of one command run. The only file with wall-clock content.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub scenario: String,
    pub seed: u64,
    /// SHA-256 of the canonical JSON config.
    pub config_hash: String,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<String>,
    /// Config with every default filled in.
    pub config: serde_json::Value,
}

pub fn config_hash(config: &ExperimentConfig) -> Result<String> {
    Ok(hex::encode(Sha256::digest(config.canonical_json()?.as_bytes())))
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Merges manifests found in `dirs` into one CSV table, one row per manifest.
pub fn summarize(dirs: &[PathBuf], out: impl Write) -> Result<usize> {
    if dirs.is_empty() {
        return Err(Error::invalid("report needs at least one run directory"));
    }
    let manifests: Vec<(PathBuf, RunManifest)> =
        dirs.iter().map(|d| Ok((d.clone(), RunManifest::load(&d.join("manifest.json"))?))).collect::<Result<_>>()?;
    let version = &manifests[0].1.version;
    if let Some((d, m)) = manifests.iter().find(|(_, m)| &m.version != version || m.tool != manifests[0].1.tool) {
        return Err(Error::config(format!(
            "mixed tool versions: {} {} in {} vs {version}",
            m.tool,
            m.version,
            d.display()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run", "scenario", "command", "seed", "config_hash", "version", "outputs", "started", "finished"])?;
    for (d, m) in &manifests {
        w.write_record([
            d.display().to_string(),
            m.scenario.clone(),
            m.command.clone(),
            m.seed.to_string(),
            m.config_hash.clone(),
            m.version.clone(),
            m.outputs.join(";"),
            m.started.clone(),
            m.finished.clone(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(manifests.len())
}
