//! Frozen-feature extraction and the sparse logistic-regression probe.
//!
//! A pre-trained network is never fine-tuned here: features are last-step
//! hidden states read in evaluation mode, and the only thing fitted per
//! target task is a logistic regression with an L1 penalty on the weights
//! (intercept unpenalized), which is equivalent to retraining just the
//! final layer. Features are standardized with training-set statistics
//! before fitting because the L1 penalty is scale-sensitive.

mod features;
mod lasso;

pub use features::{extract_features, read_features_csv, write_features_csv};
pub use lasso::{
    lambda_max, lambda_sweep, lr_fit_l1, lr_fit_l1_detailed, lr_predict, soft_threshold,
    sparsity_fraction, LambdaScore, LassoFit, LassoOptions,
};

use crate::rnn::ModelError;
use ndarray::Array1;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("probe fitting needs at least one instance of each class")]
    DegenerateLabels,
    #[error("feature vector has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("lambda grid is empty")]
    EmptyGrid,
    #[error("lambda must be finite and non-negative, got {0}")]
    InvalidLambda(f64),
    #[error("episode {episode_id} carries {got} labels; feature extraction expects a single target label")]
    SingleLabelRequired { episode_id: String, got: usize },
    #[error("feature set is empty")]
    EmptyFeatures,
    #[error("{path}:{line}: {message}")]
    ParseCsv {
        path: String,
        line: usize,
        message: String,
    },
    #[error("unsupported probe format: {0}")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("probe file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Which hidden layers feed the probe: the top layer alone (length `h`) or
/// all layers concatenated in layer order (length `h * L`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerSelection {
    Top,
    All,
}

impl std::fmt::Display for LayerSelection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LayerSelection::Top => write!(f, "top"),
            LayerSelection::All => write!(f, "all"),
        }
    }
}

impl std::str::FromStr for LayerSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "top" => Ok(LayerSelection::Top),
            "all" => Ok(LayerSelection::All),
            other => Err(format!("unknown layer selection {other:?} (use top or all)")),
        }
    }
}

/// One instance's frozen features with its target-task label.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub episode_id: String,
    pub label: u8,
    pub values: Array1<f64>,
}

/// A fitted probe: weights and intercept on standardized features, the
/// penalty it was fitted at, and the training-set standardization
/// parameters baked in so prediction needs nothing else.
#[derive(Clone, Debug, PartialEq)]
pub struct LrProbe {
    pub weights: Array1<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub feature_means: Array1<f64>,
    pub feature_stds: Array1<f64>,
    pub layers_used: LayerSelection,
}

pub const PROBE_FORMAT_VERSION: &str = "1";

#[derive(Serialize, Deserialize)]
struct ProbeJson {
    format_version: String,
    lambda: f64,
    weights: Vec<f64>,
    intercept: f64,
    feature_means: Vec<f64>,
    feature_stds: Vec<f64>,
    layers_used: LayerSelection,
}

impl LrProbe {
    pub fn num_features(&self) -> usize {
        self.weights.len()
    }

    pub fn to_json_bytes(&self) -> Result<Vec<u8>, TransferError> {
        let file = ProbeJson {
            format_version: PROBE_FORMAT_VERSION.to_string(),
            lambda: self.lambda,
            weights: self.weights.to_vec(),
            intercept: self.intercept,
            feature_means: self.feature_means.to_vec(),
            feature_stds: self.feature_stds.to_vec(),
            layers_used: self.layers_used,
        };
        Ok(serde_json::to_vec(&file)?)
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self, TransferError> {
        let value: serde_json::Value = serde_json::from_slice(bytes)?;
        match value.get("format_version") {
            None => {
                return Err(TransferError::UnsupportedFormat(
                    "file has no format_version field".into(),
                ))
            }
            Some(v) if v != PROBE_FORMAT_VERSION => {
                return Err(TransferError::UnsupportedFormat(format!(
                    "format_version {v} (this build reads version {PROBE_FORMAT_VERSION})"
                )))
            }
            _ => {}
        }
        let file: ProbeJson = serde_json::from_value(value)?;
        let m = file.weights.len();
        if file.feature_means.len() != m || file.feature_stds.len() != m {
            return Err(TransferError::LengthMismatch {
                expected: m,
                got: file.feature_means.len().max(file.feature_stds.len()),
            });
        }
        Ok(LrProbe {
            weights: Array1::from_vec(file.weights),
            intercept: file.intercept,
            lambda: file.lambda,
            feature_means: Array1::from_vec(file.feature_means),
            feature_stds: Array1::from_vec(file.feature_stds),
            layers_used: file.layers_used,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), TransferError> {
        std::fs::write(path, self.to_json_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TransferError> {
        let bytes = std::fs::read(path)?;
        Self::from_json_bytes(&bytes)
    }
}
