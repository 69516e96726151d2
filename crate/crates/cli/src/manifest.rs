use std::fs;
use std::path::Path;

use fpsim_core::config::BackendKind;
use fpsim_core::{EmbeddingProvider, HaltReason, SimulationConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Summary of one simulation run, written last into the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Name of the config copy inside the run directory.
    pub config_file: String,
    /// SHA-256 of the config file bytes, lowercase hex.
    pub config_sha256: String,
    pub seed: u64,
    pub backend: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub embedding: String,
    pub agent_count: usize,
    pub iterations: u64,
    pub halt_reason: HaltReason,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> std::io::Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(dir.join(MANIFEST_FILE), text)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn embedding_id(config: &SimulationConfig) -> String {
    let provider = match config.embedding.provider {
        EmbeddingProvider::Hashing => "hashing",
        EmbeddingProvider::Remote => "remote",
    };
    format!("{provider}-{}", config.embedding.dimension)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_abc() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
