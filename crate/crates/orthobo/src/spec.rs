//! Experiment specifications read from TOML.
//!
//! ```toml
//! replications = 16
//! base_seed = 0
//! output = "runs/hartmann6"
//!
//! [defaults]
//! objective = "hartmann6"
//! kernel = "linear"
//! mc_samples = 64
//!
//! [[cells]]
//! method = "orth-ei"
//!
//! [[cells]]
//! method = "mc-ei"
//! name = "mc-ei-s256"
//! overrides = { mc_samples = 256 }
//! ```
//!
//! Replication `r` of every cell runs with seed `base_seed + r`.

use std::path::{Path, PathBuf};

use orthobo_core::engine::{Method, RunConfig};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, IoContext, Result};
use crate::probe::ProbeRequest;

pub const SEED_ENV: &str = "ORTHOBO_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub method: Method,
    /// Falls back to `defaults.objective`, then the run default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Any `RunConfig` field except `seed`, `method` and `objective`.
    #[serde(default)]
    pub overrides: toml::Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default)]
    pub defaults: toml::Table,
    #[serde(default)]
    pub cells: Vec<CellSpec>,
    #[serde(default)]
    pub probes: Vec<ProbeRequest>,
}

fn default_replications() -> usize {
    16
}

fn default_output() -> PathBuf {
    PathBuf::from("orthobo-out")
}

fn default_jobs() -> usize {
    1
}

/// A cell with its name fixed and its config fully merged (seed left at 0).
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedCell {
    pub name: String,
    pub config: RunConfig,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text)?;
        spec.resolve()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path).at(path)?)
    }

    /// Applies `ORTHOBO_SEED` when set.
    pub fn apply_seed_env(&mut self) -> Result<()> {
        if let Ok(value) = std::env::var(SEED_ENV) {
            self.base_seed = value
                .trim()
                .parse()
                .map_err(|_| HarnessError::InvalidSpec(format!("{SEED_ENV}={value:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn replication_seed(&self, replication: usize) -> u64 {
        self.base_seed.wrapping_add(replication as u64)
    }

    pub fn resolve(&self) -> Result<Vec<ResolvedCell>> {
        if self.jobs == 0 {
            return Err(HarnessError::InvalidSpec("jobs must be at least 1".into()));
        }
        for key in ["seed", "method"] {
            if self.defaults.contains_key(key) {
                return Err(HarnessError::InvalidSpec(format!("`{key}` cannot be set in defaults")));
            }
        }
        let mut cells: Vec<ResolvedCell> = Vec::with_capacity(self.cells.len());
        for cell in &self.cells {
            for key in ["seed", "method", "objective"] {
                if cell.overrides.contains_key(key) {
                    return Err(HarnessError::InvalidSpec(format!("`{key}` cannot be overridden per cell")));
                }
            }
            let mut table = self.defaults.clone();
            table.extend(cell.overrides.clone());
            table.insert("method".into(), toml::Value::String(cell.method.name().into()));
            if let Some(objective) = &cell.objective {
                table.insert("objective".into(), toml::Value::String(objective.clone()));
            }
            let config: RunConfig = toml::Value::Table(table).try_into()?;
            config.validate()?;
            let name = cell.name.clone().unwrap_or_else(|| format!("{}-{}", config.method, config.objective.replace(':', "")));
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.')) {
                return Err(HarnessError::InvalidSpec(format!("cell name {name:?} must be non-empty and use [A-Za-z0-9._-]")));
            }
            if cells.iter().any(|c| c.name == name) {
                return Err(HarnessError::InvalidSpec(format!("duplicate cell name {name:?}")));
            }
            cells.push(ResolvedCell { name, config });
        }
        for probe in &self.probes {
            probe.validate()?;
        }
        Ok(cells)
    }
}
