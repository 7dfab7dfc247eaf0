use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ArchConfig, ModelError, ModelParams};
use crate::data::EncoderSpec;
use crate::training::OptimizerState;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Self-describing parameter container.
///
/// Stored as JSON; floats are written in shortest round-trip form and parsed
/// with correct rounding, so save/load is bit-exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub arch: ArchConfig,
    pub seed: u64,
    /// Number of completed training epochs.
    pub epoch: usize,
    pub params: ModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder: Option<EncoderSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerState>,
    /// Free-form provenance (scenario, index kind, pipeline settings).
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(arch: ArchConfig, seed: u64, params: ModelParams) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            arch,
            seed,
            epoch: 0,
            params,
            encoder: None,
            optimizer: None,
            meta: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        serde_json::to_string_pretty(self).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported version {} (this build reads {})",
                ck.version, CHECKPOINT_VERSION
            )));
        }
        ck.params.check_shapes(&ck.arch)?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
