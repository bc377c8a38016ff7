//! Versioned experiment configuration.
//!
//! A config file is TOML with a top-level `schema_version` and optional
//! `[plant]`, `[train]`, `[session]` and `[policy]` tables. User files are
//! merged key-by-key over the bundled defaults, so a file only needs to name
//! the values it changes.

use crate::cqi::TrainConfig;
use crate::plant::PlantConfig;
use crate::session::SessionTimings;
use crate::simuser::PolicyConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("schema_version {found} is not supported (expected {expected})")]
    SchemaVersion { found: i64, expected: u32 },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub plant: PlantConfig,
    pub train: TrainConfig,
    pub session: SessionTimings,
    pub policy: PolicyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::from_toml_str("").expect("bundled default config is valid")
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl ExperimentConfig {
    /// Parses a user config and merges it over the defaults. An empty string
    /// yields the defaults.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Self::from_layers(&[text])
    }

    /// Merges each layer over the defaults and the layers before it, then
    /// validates the result.
    pub fn from_layers(layers: &[&str]) -> Result<Self, ConfigError> {
        let mut base: toml::Value = DEFAULT_CONFIG
            .parse::<toml::Table>()
            .map(toml::Value::Table)
            .map_err(|e| ConfigError::Parse(format!("bundled defaults: {e}")))?;
        for text in layers {
            let user: toml::Table = text
                .parse()
                .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
            if let Some(v) = user.get("schema_version") {
                let found = v.as_integer().ok_or_else(|| ConfigError::Invalid {
                    path: "schema_version".into(),
                    message: "must be an integer".into(),
                })?;
                if found != i64::from(CONFIG_SCHEMA_VERSION) {
                    return Err(ConfigError::SchemaVersion {
                        found,
                        expected: CONFIG_SCHEMA_VERSION,
                    });
                }
            }
            merge(&mut base, toml::Value::Table(user));
        }
        let config: ExperimentConfig =
            serde_path_to_error::deserialize(base).map_err(|e| ConfigError::Invalid {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        config.validate()?;
        Ok(config)
    }

    /// Reads and layers the given files in order.
    pub fn load_all(paths: &[std::path::PathBuf]) -> Result<Self, ConfigError> {
        let texts = paths
            .iter()
            .map(|p| {
                std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.display().to_string(),
                    source,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_layers(&texts.iter().map(String::as_str).collect::<Vec<_>>())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.plant.validate()?;
        self.train.validate()?;
        self.session.validate()?;
        self.policy.validate()?;
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
