//! Run configuration: one JSON file covering data generation, training and
//! selection, driven by a single seed.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::SyntheticShiftSpec;
use crate::error::{IdcError, Result};
use crate::select::{Method, Strategy};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectConfig {
    pub method: Method,
    pub strategy: Strategy,
    pub ratio: f64,
    /// Evenly distributed fraction of the quota under the `M` strategy.
    pub class_split: f64,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            method: Method::Idc,
            strategy: Strategy::M,
            ratio: 0.1,
            class_split: 0.9,
        }
    }
}

impl SelectConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(IdcError::ConfigInvalid(format!("ratio {} outside (0, 1]", self.ratio)));
        }
        if !(0.0..=1.0).contains(&self.class_split) {
            return Err(IdcError::ConfigInvalid(format!(
                "class_split {} outside [0, 1]",
                self.class_split
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides the seeds inside `data` and `train`.
    pub seed: u64,
    pub data: SyntheticShiftSpec,
    pub train: TrainConfig,
    pub select: SelectConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            data: SyntheticShiftSpec::default(),
            train: TrainConfig::default(),
            select: SelectConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| IdcError::ConfigInvalid(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| IdcError::io(path, e))?;
        Self::from_json(&text)
    }

    /// Propagates the top-level seed and validates every section.
    pub fn resolve(mut self) -> Result<Self> {
        self.data.seed = self.seed;
        self.train.seed = self.seed;
        self.data.validate()?;
        self.train.validate()?;
        self.select.validate()?;
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let compact = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(compact.as_bytes()))
    }

    /// First 12 hex digits of [`RunConfig::hash`].
    pub fn short_hash(&self) -> String {
        self.hash()[..12].to_string()
    }
}
