//! Run configuration: one TOML file plus `key.path=value` overrides.
//!
//! ```toml
//! [corpus]
//! seed = 7
//! per_class = 50
//!
//! [pipeline]
//! split_seed = 0
//! feature_set = "manifest_scene_graph"
//!
//! [pipeline.app_encoder]
//! epochs = 200
//!
//! [experiment]
//! mask_ratios = [0.1, 0.3, 0.5, 0.7]
//! ```
//!
//! Every field is optional; missing ones take their defaults.

use crate::corpus::CorpusSpec;
use crate::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("override `{0}`: expected key.path=value")]
    Override(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mask_ratios: Vec<f64>,
    pub alphas: Vec<f64>,
    /// One label shuffle per seed for the chance-level control.
    pub shuffle_seeds: Vec<u64>,
    pub ablations: bool,
    pub sweeps: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mask_ratios: vec![0.1, 0.3, 0.5, 0.7],
            alphas: vec![0.01, 1.0, 100.0],
            shuffle_seeds: (1..=20).collect(),
            ablations: true,
            sweeps: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub corpus: CorpusSpec,
    pub pipeline: PipelineConfig,
    pub experiment: ExperimentConfig,
}

impl Config {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.corpus.validate().map_err(ConfigError::Invalid)?;
        self.pipeline
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let e = &self.experiment;
        if e.mask_ratios.iter().any(|p| !(0.0..1.0).contains(p)) {
            return Err(ConfigError::Invalid("mask ratios must lie in [0, 1)".into()));
        }
        if e.alphas.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(ConfigError::Invalid("alphas must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Parses TOML text, applies overrides, validates.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Config, ConfigError> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Invalid(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Config = table
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Config, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError::Read {
                path: p.display().to_string(),
                message: e.to_string(),
            })?,
            None => String::new(),
        };
        Config::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Values parse as TOML (`3`, `0.5`, `true`, `[1, 2]`, `"x"`); anything
/// else is taken as a bare string.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(spec.to_string()))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Override(spec.to_string()));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::Override(format!("{spec} (`{p}` is not a table)")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
