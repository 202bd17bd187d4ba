//! Episode records, channel schemas, encoding, splits, and synthetic cohorts.
//!
//! Raw data is a list of hourly observation rows per episode, one slot per
//! raw channel. Encoding turns a record into a fixed-width `f64` matrix:
//! real channels pass through, categorical channels expand to one-hot
//! blocks, and missing values are forward-filled (channel default before the
//! first observation). Splits hold encoded instances plus the ordered task
//! list defining the meaning of each label position.

mod encode;
mod io;
mod sampling;
mod synthetic;

pub use encode::{encode_record, encode_split};
pub use io::{load_dataset, load_encoded, save_dataset};
pub use sampling::{filter_source_split, subsample_labeled};
pub use synthetic::{generate_synthetic, generate_synthetic_records, PhenotypeSignature};
pub use synthetic::{SyntheticSpec, MORTALITY_TASK};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("episode {0} has no observation rows")]
    EmptyEpisode(String),
    #[error("episode {episode_id} hour {hour}: expected {expected} channel slots, found {found}")]
    RowWidthMismatch {
        episode_id: String,
        hour: usize,
        expected: usize,
        found: usize,
    },
    #[error("episode {episode_id}: unknown category {value:?} for channel {channel}")]
    UnknownCategory {
        episode_id: String,
        channel: String,
        value: String,
    },
    #[error("episode {episode_id}: channel {channel} expects a {expected} value")]
    ChannelKindMismatch {
        episode_id: String,
        channel: String,
        expected: &'static str,
    },
    #[error("episode {episode_id} is missing a label for task {task}")]
    MissingLabel { episode_id: String, task: String },
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("holding out every task leaves no source tasks")]
    NoSourceTasks,
    #[error("fraction must be in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

/// Whether a raw channel carries real numbers or named categories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Real,
    Categorical,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelDef {
    pub name: String,
    pub kind: ChannelKind,
    /// Ordered category names; empty for real channels.
    #[serde(default)]
    pub categories: Vec<String>,
}

/// Ordered list of raw channels plus the encoded layout they induce.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSchema {
    pub channels: Vec<ChannelDef>,
}

impl ChannelSchema {
    pub fn new(channels: Vec<ChannelDef>) -> Result<Self, DatasetError> {
        let schema = ChannelSchema { channels };
        schema.validate()?;
        Ok(schema)
    }

    fn validate(&self) -> Result<(), DatasetError> {
        let mut names = std::collections::BTreeSet::new();
        for ch in &self.channels {
            if !names.insert(&ch.name) {
                return Err(DatasetError::Validation(format!(
                    "duplicate channel name {}",
                    ch.name
                )));
            }
            match ch.kind {
                ChannelKind::Real => {
                    if !ch.categories.is_empty() {
                        return Err(DatasetError::Validation(format!(
                            "real channel {} must not declare categories",
                            ch.name
                        )));
                    }
                }
                ChannelKind::Categorical => {
                    if ch.categories.is_empty() {
                        return Err(DatasetError::Validation(format!(
                            "categorical channel {} declares no categories",
                            ch.name
                        )));
                    }
                    let mut cats = std::collections::BTreeSet::new();
                    for c in &ch.categories {
                        if !cats.insert(c) {
                            return Err(DatasetError::Validation(format!(
                                "channel {} has duplicate category {c}",
                                ch.name
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of raw channels (one observation slot each).
    pub fn raw_width(&self) -> usize {
        self.channels.len()
    }

    /// Width of the encoded row: one column per real channel plus one per
    /// category of each categorical channel.
    pub fn encoded_width(&self) -> usize {
        self.channels
            .iter()
            .map(|c| match c.kind {
                ChannelKind::Real => 1,
                ChannelKind::Categorical => c.categories.len(),
            })
            .sum()
    }

    /// Column offset of each channel's block in the encoded row.
    pub fn column_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.channels.len());
        let mut at = 0usize;
        for c in &self.channels {
            offsets.push(at);
            at += match c.kind {
                ChannelKind::Real => 1,
                ChannelKind::Categorical => c.categories.len(),
            };
        }
        offsets
    }

    /// Hex SHA-256 of the canonical JSON rendering; stored in model files so
    /// a model is never applied to data with a different layout.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("schema serializes");
        crate::cli::manifest::sha256_hex(json.as_bytes())
    }
}

/// One observed value: a number for real channels, a name for categorical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelValue {
    Real(f64),
    Category(String),
}

/// One hospital-stay episode as ingested: hourly rows of raw observations
/// (`None` = missing) and a task-name-to-bit label map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRecord {
    pub episode_id: String,
    /// Row `t` holds the observations for hour `t + 1`; hours are
    /// consecutive starting at 1.
    pub hours: Vec<Vec<Option<ChannelValue>>>,
    pub labels: BTreeMap<String, u8>,
}

/// A fully encoded episode: `values` is `valid_length x n`, already imputed
/// and one-hot expanded, truncated to the horizon. `labels` follows the task
/// order of the split the instance belongs to.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedInstance {
    pub episode_id: String,
    pub values: Array2<f64>,
    pub labels: Vec<u8>,
}

impl EncodedInstance {
    pub fn valid_length(&self) -> usize {
        self.values.nrows()
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }
}

/// Train/validation/test lists of encoded instances sharing one schema and
/// one ordered task list.
#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub train: Vec<EncodedInstance>,
    pub validation: Vec<EncodedInstance>,
    pub test: Vec<EncodedInstance>,
    pub task_names: Vec<String>,
}

impl DatasetSplit {
    pub fn num_tasks(&self) -> usize {
        self.task_names.len()
    }
}

/// Same split structure before encoding; this is what dataset directories
/// store on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSplit {
    pub train: Vec<EpisodeRecord>,
    pub validation: Vec<EpisodeRecord>,
    pub test: Vec<EpisodeRecord>,
    pub task_names: Vec<String>,
}
