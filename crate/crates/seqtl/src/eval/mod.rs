//! Metrics, the statistical-feature baseline, and the experiment harness
//! comparing model families as the labeled training fraction shrinks.

mod auroc;
mod report;
mod stats;
mod sweep;

pub use auroc::{auroc, weighted_auroc};
pub use report::{
    sparsity_report, write_fraction_plot_csv, write_heatmap_csv, write_sparsity_summary_csv,
    write_sweep_csv, write_table_csv, SparsityReport, SparsityRow,
};
pub use stats::{statistical_features, STATS_PER_CHANNEL};
pub use sweep::{
    fit_reference_probes, run_label_fraction_sweep, SweepOptions, TargetInstance, TargetTaskData,
};

use crate::dataset::DatasetError;
use crate::pretrain::TrainError;
use crate::rnn::ModelError;
use crate::transfer::TransferError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("AUROC is undefined for task {task}: needs at least one positive and one negative")]
    UndefinedMetric { task: String },
    #[error("task {task} has non-finite scores")]
    NonFiniteScore { task: String },
    #[error("no tasks to aggregate")]
    NoTasks,
    #[error("target task {0} is among the model's source tasks; transfer would leak")]
    TargetInSource(String),
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("sweep options invalid: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Scores with binary labels for one task.
#[derive(Clone, Debug)]
pub struct ScoredSet {
    pub task: String,
    pub pairs: Vec<(f64, u8)>,
}

/// The four model families the harness compares.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    /// L1 logistic regression on hand-crafted statistical features.
    StatLr,
    /// Task-specific recurrent classifier trained on target data only.
    TargetRnn,
    /// Probe on the frozen network's top-layer features.
    FrozenTopLr,
    /// Probe on the frozen network's concatenated all-layer features.
    FrozenAllLr,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::StatLr,
        Family::TargetRnn,
        Family::FrozenTopLr,
        Family::FrozenAllLr,
    ];
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Family::StatLr => "LR",
            Family::TargetRnn => "RNN-C",
            Family::FrozenTopLr => "MN-LR-1",
            Family::FrozenAllLr => "MN-LR-2",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "LR" => Ok(Family::StatLr),
            "RNN-C" => Ok(Family::TargetRnn),
            "MN-LR-1" => Ok(Family::FrozenTopLr),
            "MN-LR-2" => Ok(Family::FrozenAllLr),
            other => Err(format!(
                "unknown family {other:?} (use LR, RNN-C, MN-LR-1, MN-LR-2)"
            )),
        }
    }
}

/// One harness cell: a family evaluated at one labeled fraction and seed.
#[derive(Clone, Debug)]
pub struct SweepCell {
    pub family: Family,
    pub fraction: f64,
    pub seed: u64,
    pub test_auroc: Option<f64>,
    pub status: String,
}

/// All cells of a sweep over one target task, plus the hash pinning the
/// fixed test set every cell was scored on.
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub target_task: String,
    pub test_set_hash: String,
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    /// Mean test AUROC of the non-skipped cells of one family at one
    /// fraction.
    pub fn mean_auroc(&self, family: Family, fraction: f64) -> Option<f64> {
        let values: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.family == family && c.fraction == fraction)
            .filter_map(|c| c.test_auroc)
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }
}
