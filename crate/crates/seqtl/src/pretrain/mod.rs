//! Supervised pre-training: multi-label cross-entropy, Adam, the mini-batch
//! loop with early stopping, and the hidden-size sweep. The same trainer
//! with `K = 1` produces the task-specific recurrent baseline.

mod adam;
mod loss;
mod trainer;

pub use adam::{adam_step, AdamState};
pub use loss::multilabel_cross_entropy;
pub use trainer::{fit_source, hidden_size_sweep, select_candidate};

use crate::dataset::EncodedInstance;
use crate::rnn::{forward, GruStack, HeadParams, ModelError};
use ndarray::Array1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("instance {episode_id} carries {got} labels, expected {expected}")]
    LabelMismatch {
        episode_id: String,
        expected: usize,
        got: usize,
    },
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("gradient became non-finite at epoch {epoch}")]
    NonFiniteGradient { epoch: usize },
    #[error("hidden-size sweep needs at least one candidate")]
    EmptyCandidates,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Optimization settings; the JSON config file mirrors this struct field by
/// field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    /// Epochs without validation-loss improvement before training stops.
    pub patience: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            learning_rate: 1e-4,
            dropout: 0.3,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(TrainError::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(TrainError::InvalidConfig(
                "dropout must lie in [0, 1)".into(),
            ));
        }
        if self.patience == 0 {
            return Err(TrainError::InvalidConfig("patience must be >= 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(TrainError::InvalidConfig("max_epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-epoch losses recorded during a fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// A trained network frozen at its best validation epoch, with the task
/// order its head outputs follow and the full loss history.
#[derive(Clone, Debug)]
pub struct PretrainedModel {
    pub stack: GruStack,
    pub head: HeadParams,
    pub task_names: Vec<String>,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

impl PretrainedModel {
    /// Wraps already-trained parameters, e.g. loaded from a model file.
    pub fn from_parts(stack: GruStack, head: HeadParams, task_names: Vec<String>) -> Self {
        PretrainedModel {
            stack,
            head,
            task_names,
            history: Vec::new(),
            best_epoch: 0,
            best_val_loss: f64::NAN,
        }
    }

    /// Evaluation-mode task probabilities for one instance.
    pub fn predict(&self, instance: &EncodedInstance) -> Result<Array1<f64>, ModelError> {
        Ok(forward(&instance.values.view(), &self.stack, &self.head, None)?.y_hat)
    }

    pub fn num_tasks(&self) -> usize {
        self.head.num_tasks()
    }

    pub fn to_model_bytes(&self, metadata: &crate::rnn::ModelMetadata) -> Result<Vec<u8>, ModelError> {
        crate::rnn::serialize_model(&self.stack, &self.head, metadata)
    }

    pub fn from_model_bytes(bytes: &[u8]) -> Result<(Self, crate::rnn::ModelMetadata), ModelError> {
        let (stack, head, metadata) = crate::rnn::deserialize_model(bytes)?;
        let model = PretrainedModel::from_parts(stack, head, metadata.task_names.clone());
        Ok((model, metadata))
    }
}

/// Writes the per-epoch loss history as `epoch,train_loss,val_loss`.
pub fn write_history_csv(path: &std::path::Path, history: &[EpochStats]) -> std::io::Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "epoch,train_loss,val_loss")?;
    for e in history {
        writeln!(out, "{},{},{}", e.epoch, e.train_loss, e.val_loss)?;
    }
    out.flush()
}
