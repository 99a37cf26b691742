//! Top-level run configuration.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cbf::ShieldParams;
use crate::marl::TrainerConfig;
use crate::sim::WorldConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Invalid(String),
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub world: WorldConfig,
    pub shield: ShieldParams,
    pub trainer: TrainerConfig,
    pub runs: usize,
    /// One seed per run.
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub shield_enabled: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            shield: ShieldParams::default(),
            trainer: TrainerConfig::default(),
            runs: 5,
            seeds: vec![1, 2, 3, 4, 5],
            output_dir: PathBuf::from("out"),
            shield_enabled: true,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Seeds for `runs` consecutive runs starting at `first`.
    pub fn seed_range(first: u64, runs: usize) -> Vec<u64> {
        (0..runs as u64).map(|k| first + k).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.seeds.len() != self.runs {
            return invalid(format!(
                "seed list has {} entries but runs = {}",
                self.seeds.len(),
                self.runs
            ));
        }
        self.world
            .validate(self.shield.d_s)
            .map_err(|e| ConfigError::Invalid(format!("world: {e}")))?;
        self.shield
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("shield: {e}")))?;
        self.trainer
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("trainer: {e}")))?;
        if self.shield.a_max_self > self.world.a_max || self.shield.a_max_other > self.world.a_max {
            return invalid("shield authorities must not exceed world a_max".into());
        }
        Ok(())
    }
}
