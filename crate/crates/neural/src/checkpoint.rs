//! JSON checkpoints: config, normalizer and every parameter as a
//! shape-tagged flat array. Floats round-trip exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NeuralError, Result};
use crate::model::{ModelConfig, Normalizer, SiameseModel};
use crate::param::Parameterized;

pub const CHECKPOINT_FORMAT: &str = "dropsync-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub schema_version: u32,
    pub config: ModelConfig,
    pub normalizer: Normalizer,
    pub params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn from_model(model: &SiameseModel) -> Self {
        let params = model
            .params()
            .into_iter()
            .map(|p| ParamRecord { name: p.name.clone(), shape: p.value.shape.clone(), data: p.value.data.clone() })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            schema_version: CHECKPOINT_VERSION,
            config: model.config,
            normalizer: model.normalizer,
            params,
        }
    }

    pub fn into_model(self) -> Result<SiameseModel> {
        if self.format != CHECKPOINT_FORMAT || self.schema_version != CHECKPOINT_VERSION {
            return Err(NeuralError::Checkpoint(format!("unsupported format {} v{}", self.format, self.schema_version)));
        }
        let mut model = SiameseModel::new(self.config, &mut dropsync_core::rng::rng(0))?;
        model.normalizer = self.normalizer;
        let mut slots = model.params_mut();
        if slots.len() != self.params.len() {
            return Err(NeuralError::Checkpoint(format!("expected {} parameters, found {}", slots.len(), self.params.len())));
        }
        for (slot, rec) in slots.iter_mut().zip(self.params) {
            if slot.name != rec.name || slot.value.shape != rec.shape {
                return Err(NeuralError::Checkpoint(format!(
                    "parameter {} {:?} does not match {} {:?}",
                    rec.name, rec.shape, slot.name, slot.value.shape
                )));
            }
            if rec.data.len() != slot.len() || rec.data.iter().any(|v| !v.is_finite()) {
                return Err(NeuralError::Checkpoint(format!("bad data for {}", rec.name)));
            }
            slot.value.data = rec.data;
        }
        Ok(model)
    }
}

pub fn to_json(model: &SiameseModel) -> Result<String> {
    Ok(serde_json::to_string(&Checkpoint::from_model(model))?)
}

pub fn from_json(s: &str) -> Result<SiameseModel> {
    serde_json::from_str::<Checkpoint>(s)?.into_model()
}

pub fn save(model: &SiameseModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_json(model)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<SiameseModel> {
    from_json(&std::fs::read_to_string(path)?)
}
