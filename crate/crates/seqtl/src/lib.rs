//! Transfer learning for multivariate clinical-style time series.
//!
//! The pipeline pre-trains a multi-layer GRU on many binary labelling tasks
//! at once (one task per phenotype), freezes it, reads the last-step hidden
//! states out as features, and fits small L1-regularized logistic-regression
//! probes on those features for new target tasks with few labels. Everything
//! needed around that idea lives here too: episode encoding, synthetic cohort
//! generation, exact backpropagation through time, Adam, AUROC evaluation,
//! a hand-crafted statistical-feature baseline, and the label-fraction sweep
//! harness that compares model families on shrinking training sets.
//!
//! The crate is a library first; `src/bin/seqtl.rs` is a thin command-line
//! wrapper and the `examples/` directory shows one runnable program per major
//! capability.
//!
//! All computation is in `f64`. Every random draw goes through the ChaCha8
//! counter-based generator seeded explicitly, so datasets, initializations,
//! and trained models are reproducible bit-for-bit from `(inputs, config,
//! seed)`.

pub mod cli;
pub mod dataset;
pub mod eval;
pub mod pretrain;
pub mod rnn;
pub mod transfer;

pub use dataset::{
    ChannelKind, ChannelSchema, DatasetSplit, EncodedInstance, EpisodeRecord, RawSplit,
    SyntheticSpec,
};
pub use pretrain::{PretrainedModel, TrainConfig};
pub use rnn::{GruStack, HeadParams};
pub use transfer::{FeatureVector, LayerSelection, LrProbe};
