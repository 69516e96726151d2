//! Run configuration, loadable from TOML or JSON.
//!
//! ```toml
//! personas = "personas.jsonl"   # relative to the config file
//! max_iterations = 50
//! feed_size = 5
//! candidate_count = 10
//! duplicate_threshold = 0.99
//! ltm_threshold = 0.5
//! half_life = 3.0
//! seed = 7
//! backend = "scripted"          # or "remote"
//!
//! [scripted]
//! post_prob = 0.4
//!
//! [embedding]
//! provider = "hashing"          # or "remote"
//! dimension = 256
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::DEFAULT_DIMENSION;
use crate::reasoning::{RemoteSettings, ScriptedPolicy};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Scripted,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingProvider {
    Hashing,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSettings {
    pub provider: EmbeddingProvider,
    pub dimension: usize,
    pub timeout_secs: u64,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        Self {
            provider: EmbeddingProvider::Hashing,
            dimension: DEFAULT_DIMENSION,
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub personas: PathBuf,
    pub max_iterations: u64,
    pub feed_size: usize,
    pub candidate_count: usize,
    pub duplicate_threshold: f64,
    pub ltm_threshold: f64,
    pub half_life: f64,
    /// Feedback entries shown per prompt.
    pub feedback_limit: usize,
    /// Number of an agent's latest posts averaged into its feed query.
    pub query_window: usize,
    pub seed: u64,
    pub backend: BackendKind,
    /// Evaluate agent decisions on the rayon pool.
    pub parallel: bool,
    pub scripted: ScriptedPolicy,
    pub remote: RemoteSettings,
    pub embedding: EmbeddingSettings,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            personas: PathBuf::from("personas.jsonl"),
            max_iterations: 50,
            feed_size: 5,
            candidate_count: 10,
            duplicate_threshold: 0.99,
            ltm_threshold: 0.5,
            half_life: 3.0,
            feedback_limit: 10,
            query_window: 3,
            seed: 0,
            backend: BackendKind::Scripted,
            parallel: true,
            scripted: ScriptedPolicy::default(),
            remote: RemoteSettings::default(),
            embedding: EmbeddingSettings::default(),
        }
    }
}

fn unit_interval(name: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!("{name} must lie in [0, 1], got {v}")))
    }
}

impl SimulationConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let c: Self = toml::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_json_str(s: &str) -> Result<Self, ConfigError> {
        let c: Self = serde_json::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Parses by extension (`.json` is JSON, anything else TOML) and
    /// resolves a relative personas path against the config's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut c = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)?
        } else {
            Self::from_toml_str(&text)?
        };
        if c.personas.is_relative() {
            if let Some(dir) = path.parent() {
                c.personas = dir.join(&c.personas);
            }
        }
        Ok(c)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.duplicate_threshold > 0.0 && self.duplicate_threshold < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "duplicate_threshold must lie in (0, 1), got {}",
                self.duplicate_threshold
            )));
        }
        if self.candidate_count == 0 {
            return Err(ConfigError::Invalid("candidate_count must be at least 1".into()));
        }
        if !(self.half_life > 0.0 && self.half_life.is_finite()) {
            return Err(ConfigError::Invalid("half_life must be positive".into()));
        }
        if self.query_window == 0 {
            return Err(ConfigError::Invalid("query_window must be at least 1".into()));
        }
        if self.embedding.dimension == 0 {
            return Err(ConfigError::Invalid("embedding dimension must be positive".into()));
        }
        unit_interval("ltm_threshold", self.ltm_threshold)?;
        let s = &self.scripted;
        unit_interval("scripted.post_prob", s.post_prob)?;
        unit_interval("scripted.base_follow_prob", s.base_follow_prob)?;
        for (name, v) in [
            ("reshare", s.reshare),
            ("like", s.like),
            ("dislike", s.dislike),
            ("comment", s.comment),
        ] {
            if v < 0.0 {
                return Err(ConfigError::Invalid(format!("scripted.{name} must be non-negative")));
            }
        }
        if s.fixed_content.as_ref().is_some_and(|t| t.trim().is_empty()) {
            return Err(ConfigError::Invalid("scripted.fixed_content must not be empty".into()));
        }
        if self.remote.max_in_flight == 0 {
            return Err(ConfigError::Invalid("remote.max_in_flight must be at least 1".into()));
        }
        Ok(())
    }
}
