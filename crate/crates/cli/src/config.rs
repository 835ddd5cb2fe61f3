// SPDX-License-Identifier: Apache-2.0

//! Run configuration: defaults, then the JSON config file, then flags.

use std::path::{Path, PathBuf};

use netfuzz_core::dataset::{DatasetConfig, Strategy};
use netfuzz_core::fuzzer::{Budget, FuzzConfig};
use netfuzz_core::grnn::ModelConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifact::read_text;
use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub netlist: Option<PathBuf>,
    /// Design under test for `fuzz`; the netlist is the golden reference.
    pub dut: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    /// Directory holding `model.bin` and `model.json`.
    pub checkpoint: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub prng_seed: u64,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default = "default_strategy")]
    pub dataset_strategy: Strategy,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub fuzz: FuzzConfig,
    #[serde(default = "default_budget")]
    pub budget: Budget,
}

fn default_strategy() -> Strategy {
    Strategy::CoverageGuided
}

fn default_budget() -> Budget {
    Budget::Seeds(1000)
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            prng_seed: 0,
            paths: Paths::default(),
            dataset_strategy: default_strategy(),
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            fuzz: FuzzConfig::default(),
            budget: default_budget(),
        }
    }
}

/// The digested part of a config: everything except file locations.
#[derive(Serialize)]
struct DigestView<'a> {
    schema_version: u32,
    prng_seed: u64,
    dataset_strategy: Strategy,
    dataset: &'a DatasetConfig,
    model: &'a ModelConfig,
    fuzz: &'a FuzzConfig,
    budget: Budget,
}

impl RunConfig {
    /// Reads and validates a config file.
    pub fn load(path: &Path) -> CliResult<RunConfig> {
        let text = read_text(path)?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            None => return Err(CliError::ConfigInvalid("missing integer `schema_version`".into())),
            Some(v) if v != SCHEMA_VERSION as u64 => {
                return Err(CliError::SchemaVersionMismatch { found: v, expected: SCHEMA_VERSION })
            }
            Some(_) => {}
        }
        let config: RunConfig =
            serde_json::from_value(value).map_err(|e| CliError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.model.validate().map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
        let f = &self.fuzz;
        if f.timesteps == 0 {
            return Err(CliError::ConfigInvalid("fuzz.timesteps must be positive".into()));
        }
        if !(0.0..=1.0).contains(&f.fresh_probability) {
            return Err(CliError::ConfigInvalid("fuzz.fresh_probability must lie in [0, 1]".into()));
        }
        if self.dataset.timesteps == 0 || self.dataset.n_seeds == 0 {
            return Err(CliError::ConfigInvalid("dataset.n_seeds and dataset.timesteps must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.dataset.fresh_probability) {
            return Err(CliError::ConfigInvalid("dataset.fresh_probability must lie in [0, 1]".into()));
        }
        match self.budget {
            Budget::Seeds(0) => return Err(CliError::ConfigInvalid("budget must be positive".into())),
            Budget::WallClock(d) if d.is_zero() => {
                return Err(CliError::ConfigInvalid("budget must be positive".into()))
            }
            _ => {}
        }
        Ok(())
    }

    /// Hex SHA-256 over the canonical JSON of every setting that affects
    /// results. Paths are excluded.
    pub fn digest(&self) -> String {
        let view = DigestView {
            schema_version: self.schema_version,
            prng_seed: self.prng_seed,
            dataset_strategy: self.dataset_strategy,
            dataset: &self.dataset,
            model: &self.model,
            fuzz: &self.fuzz,
            budget: self.budget,
        };
        hex::encode(Sha256::digest(serde_json::to_vec(&view).expect("config serializes")))
    }
}
