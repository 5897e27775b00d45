use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::EpochLog;
use super::{Forecaster, ModelError};
use crate::dynsys::{NormalizationStats, SystemSpec, TrajectorySet};

pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained forecaster with its training record, stored as one JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecasterCheckpoint {
    pub format_version: u32,
    pub model: Forecaster,
    pub system: SystemSpec,
    pub norm: NormalizationStats,
    pub train_log: Vec<EpochLog>,
    /// Validation MSE of the kept parameters.
    pub best_val_mse: f64,
    pub dataset_fingerprint: String,
}

impl ForecasterCheckpoint {
    pub fn new(
        model: Forecaster,
        set: &TrajectorySet,
        train_log: Vec<EpochLog>,
        best_val_mse: f64,
    ) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            model,
            system: set.system.clone(),
            norm: set.norm.clone(),
            train_log,
            best_val_mse,
            dataset_fingerprint: set.fingerprint(),
        }
    }

    pub fn label(&self) -> String {
        self.model.label()
    }

    /// Identifier such as `K-MLP#2`.
    pub fn id(&self) -> String {
        self.model.spec.to_string()
    }

    /// Epochs actually run.
    pub fn epochs_run(&self) -> usize {
        self.train_log.len()
    }

    /// True when `set` is the dataset the checkpoint was trained on.
    pub fn trained_on(&self, set: &TrajectorySet) -> bool {
        set.fingerprint() == self.dataset_fingerprint
    }

    /// Dimension check; perturbed copies of the training data are accepted.
    pub fn check_dataset(&self, set: &TrajectorySet) -> Result<(), ModelError> {
        if set.dim() != self.model.spec.dim {
            return Err(ModelError::Incompatible(format!(
                "checkpoint {} has d={}, dataset d={}",
                self.id(),
                self.model.spec.dim,
                set.dim()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        serde_json::to_string(self).map_err(|e| ModelError::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        let ckpt: Self = serde_json::from_str(s).map_err(|e| ModelError::Format(e.to_string()))?;
        if ckpt.format_version != CHECKPOINT_VERSION {
            return Err(ModelError::Format(format!(
                "unsupported checkpoint format_version {}",
                ckpt.format_version
            )));
        }
        ckpt.model.spec.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)
                .map_err(|e| ModelError::Io(format!("{}: {e}", dir.display())))?;
        }
        fs::write(path, self.to_json()?)
            .map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let s = fs::read_to_string(path)
            .map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }
}
