use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EpochLoss, OptimizerState, TrainConfig, TrainError};
use crate::model::{Model, ModelConfig, ModelParams};

pub const CHECKPOINT_FORMAT: &str = "multiscale-checkpoint/1";

/// Everything needed to rebuild a model or continue its optimisation.
/// `params` is the flat parameter vector in declared order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub seed: u64,
    pub epoch: usize,
    pub loss_history: Vec<EpochLoss>,
    pub params: Vec<f64>,
    pub optimizer: OptimizerState,
}

impl Checkpoint {
    pub fn model(&self) -> Result<Model, TrainError> {
        let params = ModelParams::from_flat(&self.model_config, &self.params)?;
        Ok(Model {
            config: self.model_config.clone(),
            params,
        })
    }

    pub fn to_json(&self) -> Result<String, TrainError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(TrainError::Usage(format!("unsupported checkpoint format {:?}", ck.format)));
        }
        ck.model_config.validate()?;
        let expected = ModelParams::from_flat(&ck.model_config, &ck.params)?.num_values();
        if ck.optimizer.m.len() != expected || ck.optimizer.v.len() != expected {
            return Err(TrainError::Usage("optimizer moments do not match the parameters".into()));
        }
        if ck.params.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::Usage("checkpoint holds non-finite parameters".into()));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
