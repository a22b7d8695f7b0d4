//! JSON checkpoints: a magic string and version, the model config, and every
//! parameter as `{name, shape, values}` with full f64 precision.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &str = "wdtcn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub magic: String,
    pub version: u32,
    pub config: ModelConfig,
    pub params: Vec<NamedTensor>,
    /// Opaque training state, present in resumable checkpoints.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_state: Option<serde_json::Value>,
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        Self {
            magic: CHECKPOINT_MAGIC.to_string(),
            version: CHECKPOINT_VERSION,
            config: model.config().clone(),
            params: model
                .specs()
                .iter()
                .zip(model.params())
                .map(|(s, p)| NamedTensor {
                    name: s.name.clone(),
                    shape: p.shape().to_vec(),
                    values: p.data().to_vec(),
                })
                .collect(),
            train_state: None,
        }
    }

    pub fn to_model(&self) -> Result<Model> {
        if self.magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint(format!("bad magic `{}`", self.magic)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        let (specs, _) = super::layout(&self.config);
        let mut params = Vec::with_capacity(specs.len());
        for spec in &specs {
            let t = self
                .params
                .iter()
                .find(|p| p.name == spec.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {}", spec.name)))?;
            params.push(Tensor::new(&t.shape, t.values.clone())?);
        }
        Model::from_parts(self.config.clone(), params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = serde_json::to_vec(self)?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

impl Model {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Checkpoint::from_model(self).save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::load(path)?.to_model()
    }
}
