use super::{auroc, statistical_features, EvalError, Family, ScoredSet, SweepCell, SweepResult};
use crate::cli::manifest::sha256_hex;
use crate::dataset::{
    encode_record, subsample_labeled, ChannelSchema, DatasetSplit, EncodedInstance, EpisodeRecord,
    RawSplit,
};
use crate::pretrain::{hidden_size_sweep, PretrainedModel, TrainConfig};
use crate::transfer::{
    extract_features, lambda_sweep, lr_predict, FeatureVector, LassoOptions, LayerSelection,
    LrProbe,
};
use std::collections::{BTreeMap, HashMap};

/// One target-task instance in both the raw form (for statistical features)
/// and the encoded form (for recurrent models), labels reduced to the
/// single target bit.
#[derive(Clone, Debug)]
pub struct TargetInstance {
    pub record: EpisodeRecord,
    pub encoded: EncodedInstance,
}

/// A full split re-labelled for one target task.
#[derive(Clone, Debug)]
pub struct TargetTaskData {
    pub task: String,
    pub horizon: usize,
    pub schema: ChannelSchema,
    pub train: Vec<TargetInstance>,
    pub validation: Vec<TargetInstance>,
    pub test: Vec<TargetInstance>,
}

impl TargetTaskData {
    pub fn build(
        raw: &RawSplit,
        schema: &ChannelSchema,
        horizon: usize,
        task: &str,
    ) -> Result<Self, EvalError> {
        if !raw.task_names.iter().any(|t| t == task) {
            return Err(EvalError::UnknownTask(task.to_string()));
        }
        let tasks = vec![task.to_string()];
        let build_list = |records: &[EpisodeRecord]| -> Result<Vec<TargetInstance>, EvalError> {
            records
                .iter()
                .map(|r| {
                    let encoded = encode_record(r, schema, horizon, &tasks)?;
                    Ok(TargetInstance {
                        record: r.clone(),
                        encoded,
                    })
                })
                .collect()
        };
        Ok(TargetTaskData {
            task: task.to_string(),
            horizon,
            schema: schema.clone(),
            train: build_list(&raw.train)?,
            validation: build_list(&raw.validation)?,
            test: build_list(&raw.test)?,
        })
    }

    fn encoded(list: &[TargetInstance]) -> Vec<EncodedInstance> {
        list.iter().map(|t| t.encoded.clone()).collect()
    }
}

/// Harness settings; defaults follow the experiment protocol (full lambda
/// grid, fraction grid down to 1%, desk-scale hidden sizes for the
/// task-specific recurrent baseline).
#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    pub families: Vec<Family>,
    pub lambda_grid: Vec<f64>,
    pub rnn_hidden_grid: Vec<usize>,
    pub rnn_depth: usize,
    pub rnn_config: TrainConfig,
}

pub const DEFAULT_FRACTIONS: [f64; 6] = [0.01, 0.05, 0.1, 0.25, 0.5, 1.0];
pub const DEFAULT_LAMBDA_GRID: [f64; 6] = [0.1, 1.0, 10.0, 100.0, 1000.0, 10000.0];
pub const DEFAULT_RNN_HIDDEN_GRID: [usize; 3] = [16, 32, 64];

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            fractions: DEFAULT_FRACTIONS.to_vec(),
            seeds: vec![0],
            families: Family::ALL.to_vec(),
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            rnn_hidden_grid: DEFAULT_RNN_HIDDEN_GRID.to_vec(),
            rnn_depth: 2,
            rnn_config: TrainConfig {
                batch_size: 128,
                learning_rate: 1e-3,
                dropout: 0.3,
                max_epochs: 50,
                patience: 6,
                ..TrainConfig::default()
            },
        }
    }
}

struct FeatureBank {
    by_id: HashMap<String, usize>,
    train: Vec<FeatureVector>,
    validation: Vec<FeatureVector>,
    test: Vec<FeatureVector>,
}

impl FeatureBank {
    fn select(&self, subsample: &[EncodedInstance], list: &[FeatureVector]) -> Vec<FeatureVector> {
        subsample
            .iter()
            .map(|inst| list[self.by_id[&inst.episode_id]].clone())
            .collect()
    }
}

fn feature_bank<F>(data: &TargetTaskData, extract: F) -> FeatureBank
where
    F: Fn(&TargetInstance) -> FeatureVector,
{
    let mut by_id = HashMap::new();
    // Episode ids are disjoint across the three lists, so one map can hold
    // every id's index within its own list.
    let build = |list: &[TargetInstance], by_id: &mut HashMap<String, usize>| {
        list.iter()
            .enumerate()
            .map(|(i, t)| {
                by_id.insert(t.encoded.episode_id.clone(), i);
                extract(t)
            })
            .collect::<Vec<_>>()
    };
    let train = build(&data.train, &mut by_id);
    let validation = build(&data.validation, &mut by_id);
    let test = build(&data.test, &mut by_id);
    FeatureBank {
        by_id,
        train,
        validation,
        test,
    }
}

fn stat_feature(data: &TargetTaskData, t: &TargetInstance) -> FeatureVector {
    FeatureVector {
        episode_id: t.encoded.episode_id.clone(),
        label: t.encoded.labels[0],
        values: ndarray::Array1::from_vec(statistical_features(
            &t.record,
            &data.schema,
            data.horizon,
        )),
    }
}

fn test_set_hash(test: &[TargetInstance]) -> String {
    let mut ids: Vec<&str> = test.iter().map(|t| t.encoded.episode_id.as_str()).collect();
    ids.sort_unstable();
    sha256_hex(ids.join("\n").as_bytes())
}

fn has_both_classes(instances: &[EncodedInstance]) -> bool {
    let positives = instances.iter().filter(|i| i.labels[0] == 1).count();
    positives > 0 && positives < instances.len()
}

/// Runs the label-fraction robustness experiment for one target task.
///
/// For every `(fraction, seed)` the train and validation lists are
/// subsampled (stratified, deterministic) while the test set stays fixed;
/// each requested family then trains with its own hyperparameter selection
/// on the subsampled validation set and is scored by AUROC on the full
/// test set. Cells that cannot run (e.g. a single-class training
/// subsample) are recorded as skipped instead of failing the sweep.
pub fn run_label_fraction_sweep(
    model: &PretrainedModel,
    data: &TargetTaskData,
    options: &SweepOptions,
) -> Result<SweepResult, EvalError> {
    validate_options(options)?;
    if model.task_names.iter().any(|t| *t == data.task) {
        return Err(EvalError::TargetInSource(data.task.clone()));
    }
    let needs_model = options
        .families
        .iter()
        .any(|f| matches!(f, Family::FrozenTopLr | Family::FrozenAllLr));
    if needs_model && model.stack.input_size() != data.schema.encoded_width() {
        return Err(EvalError::Model(crate::rnn::ModelError::Dimension(format!(
            "model expects input width {}, data encodes to {}",
            model.stack.input_size(),
            data.schema.encoded_width()
        ))));
    }
    if !has_both_classes(&TargetTaskData::encoded(&data.test)) {
        return Err(EvalError::UndefinedMetric {
            task: data.task.clone(),
        });
    }
    // The fixed test set must never leak into training.
    let test_ids: std::collections::BTreeSet<&str> = data
        .test
        .iter()
        .map(|t| t.encoded.episode_id.as_str())
        .collect();
    for inst in data.train.iter().chain(&data.validation) {
        if test_ids.contains(inst.encoded.episode_id.as_str()) {
            return Err(EvalError::InvalidOptions(format!(
                "episode {} appears in both test and train/validation",
                inst.encoded.episode_id
            )));
        }
    }

    let train_enc = TargetTaskData::encoded(&data.train);
    let val_enc = TargetTaskData::encoded(&data.validation);

    let stat_bank = if options.families.contains(&Family::StatLr) {
        Some(feature_bank(data, |t| stat_feature(data, t)))
    } else {
        None
    };
    let top_bank = if options.families.contains(&Family::FrozenTopLr) {
        Some(feature_bank(data, |t| {
            extract_features(model, &t.encoded, LayerSelection::Top).expect("dimensions checked")
        }))
    } else {
        None
    };
    let all_bank = if options.families.contains(&Family::FrozenAllLr) {
        Some(feature_bank(data, |t| {
            extract_features(model, &t.encoded, LayerSelection::All).expect("dimensions checked")
        }))
    } else {
        None
    };

    let mut cells = Vec::new();
    for &fraction in &options.fractions {
        for &seed in &options.seeds {
            let sub_train = subsample_labeled(&train_enc, fraction, seed)?;
            let sub_val = subsample_labeled(&val_enc, fraction, seed)?;
            let trainable = has_both_classes(&sub_train) && !sub_val.is_empty();

            for &family in &options.families {
                let cell = if !trainable {
                    SweepCell {
                        family,
                        fraction,
                        seed,
                        test_auroc: None,
                        status: "skipped: single-class or empty training subsample".into(),
                    }
                } else {
                    run_cell(
                        data, options, family, fraction, seed, &sub_train, &sub_val,
                        stat_bank.as_ref(), top_bank.as_ref(), all_bank.as_ref(),
                    )
                };
                cells.push(cell);
            }
        }
    }

    Ok(SweepResult {
        target_task: data.task.clone(),
        test_set_hash: test_set_hash(&data.test),
        cells,
    })
}

fn validate_options(options: &SweepOptions) -> Result<(), EvalError> {
    if options.fractions.is_empty() {
        return Err(EvalError::InvalidOptions("no fractions given".into()));
    }
    if options.seeds.is_empty() {
        return Err(EvalError::InvalidOptions("no seeds given".into()));
    }
    if options.families.is_empty() {
        return Err(EvalError::InvalidOptions("no families given".into()));
    }
    if options.families.contains(&Family::TargetRnn) && options.rnn_hidden_grid.is_empty() {
        return Err(EvalError::InvalidOptions(
            "the recurrent baseline needs a hidden-size grid".into(),
        ));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    data: &TargetTaskData,
    options: &SweepOptions,
    family: Family,
    fraction: f64,
    seed: u64,
    sub_train: &[EncodedInstance],
    sub_val: &[EncodedInstance],
    stat_bank: Option<&FeatureBank>,
    top_bank: Option<&FeatureBank>,
    all_bank: Option<&FeatureBank>,
) -> SweepCell {
    let outcome: Result<f64, String> = match family {
        Family::StatLr => probe_cell(stat_bank.unwrap(), sub_train, sub_val, options, false),
        Family::FrozenTopLr => probe_cell(top_bank.unwrap(), sub_train, sub_val, options, true),
        Family::FrozenAllLr => probe_cell(all_bank.unwrap(), sub_train, sub_val, options, false),
        Family::TargetRnn => rnn_cell(data, options, seed, sub_train, sub_val),
    };
    match outcome {
        Ok(value) => SweepCell {
            family,
            fraction,
            seed,
            test_auroc: Some(value),
            status: "ok".into(),
        },
        Err(reason) => SweepCell {
            family,
            fraction,
            seed,
            test_auroc: None,
            status: format!("skipped: {}", reason.replace(',', ";")),
        },
    }
}

fn probe_cell(
    bank: &FeatureBank,
    sub_train: &[EncodedInstance],
    sub_val: &[EncodedInstance],
    options: &SweepOptions,
    top_layers: bool,
) -> Result<f64, String> {
    let train = bank.select(sub_train, &bank.train);
    let val = bank.select(sub_val, &bank.validation);
    let lasso_options = LassoOptions {
        layers_used: if top_layers {
            LayerSelection::Top
        } else {
            LayerSelection::All
        },
        ..LassoOptions::default()
    };
    let (probe, _) = lambda_sweep(&train, &val, &options.lambda_grid, &lasso_options)
        .map_err(|e| e.to_string())?;
    score_probe(&probe, &bank.test).map_err(|e| e.to_string())
}

fn score_probe(probe: &LrProbe, test: &[FeatureVector]) -> Result<f64, EvalError> {
    let pairs = test
        .iter()
        .map(|f| Ok((lr_predict(probe, f)?, f.label)))
        .collect::<Result<Vec<_>, EvalError>>()?;
    auroc(&ScoredSet {
        task: "target".into(),
        pairs,
    })
}

fn rnn_cell(
    data: &TargetTaskData,
    options: &SweepOptions,
    seed: u64,
    sub_train: &[EncodedInstance],
    sub_val: &[EncodedInstance],
) -> Result<f64, String> {
    let split = DatasetSplit {
        train: sub_train.to_vec(),
        validation: sub_val.to_vec(),
        test: Vec::new(),
        task_names: vec![data.task.clone()],
    };
    let config = TrainConfig {
        seed,
        ..options.rnn_config.clone()
    };
    let (rnn, _) = hidden_size_sweep(&split, &config, &options.rnn_hidden_grid, options.rnn_depth)
        .map_err(|e| e.to_string())?;
    let pairs = data
        .test
        .iter()
        .map(|t| {
            let score = rnn.predict(&t.encoded).map_err(|e| e.to_string())?[0];
            Ok((score, t.encoded.labels[0]))
        })
        .collect::<Result<Vec<_>, String>>()?;
    auroc(&ScoredSet {
        task: data.task.clone(),
        pairs,
    })
    .map_err(|e| e.to_string())
}

/// Full-training-data probes per requested probe family, used for sparsity
/// reporting and saved as artifacts by the sweep command.
pub fn fit_reference_probes(
    model: &PretrainedModel,
    data: &TargetTaskData,
    options: &SweepOptions,
) -> Result<BTreeMap<Family, LrProbe>, EvalError> {
    let mut out = BTreeMap::new();
    for &family in &options.families {
        let (bank, selection) = match family {
            Family::StatLr => (
                feature_bank(data, |t| stat_feature(data, t)),
                LayerSelection::All,
            ),
            Family::FrozenTopLr => (
                feature_bank(data, |t| {
                    extract_features(model, &t.encoded, LayerSelection::Top)
                        .expect("dimensions checked")
                }),
                LayerSelection::Top,
            ),
            Family::FrozenAllLr => (
                feature_bank(data, |t| {
                    extract_features(model, &t.encoded, LayerSelection::All)
                        .expect("dimensions checked")
                }),
                LayerSelection::All,
            ),
            Family::TargetRnn => continue,
        };
        let lasso_options = LassoOptions {
            layers_used: selection,
            ..LassoOptions::default()
        };
        let (probe, _) = lambda_sweep(
            &bank.train,
            &bank.validation,
            &options.lambda_grid,
            &lasso_options,
        )?;
        out.insert(family, probe);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic_records, PhenotypeSignature, SyntheticSpec};
    use crate::pretrain::fit_source;
    use crate::dataset::{encode_split, filter_source_split};

    fn spec() -> SyntheticSpec {
        SyntheticSpec {
            seed: 33,
            n_instances: 120,
            split_fractions: [0.5, 0.25, 0.25],
            n_phenotypes: 3,
            prevalences: vec![0.4, 0.35, 0.3],
            n_real_channels: 4,
            n_categorical_channels: 1,
            categories_per_channel: 3,
            series_length_range: [6, 9],
            signatures: vec![
                PhenotypeSignature {
                    channels: vec![0, 1],
                    mean_shift: 1.5,
                    trend_slope: 0.0,
                },
                PhenotypeSignature {
                    channels: vec![1, 2],
                    mean_shift: -1.2,
                    trend_slope: 0.08,
                },
                PhenotypeSignature {
                    channels: vec![0, 3],
                    mean_shift: 1.0,
                    trend_slope: -0.05,
                },
            ],
            noise_std: 0.6,
            ar_coefficient: 0.3,
        }
    }

    fn tiny_sweep_setup() -> (PretrainedModel, TargetTaskData) {
        let spec = spec();
        let (raw, schema) = generate_synthetic_records(&spec).unwrap();
        let split = encode_split(&raw, &schema, 9).unwrap();
        let held: std::collections::BTreeSet<String> =
            ["phenotype_03".to_string()].into_iter().collect();
        let source = filter_source_split(&split, &held).unwrap();
        let config = TrainConfig {
            batch_size: 32,
            learning_rate: 5e-3,
            dropout: 0.0,
            max_epochs: 6,
            patience: 6,
            seed: 1,
            ..TrainConfig::default()
        };
        let model = fit_source(&source, &config, 6, 2).unwrap();
        let data = TargetTaskData::build(&raw, &schema, 9, "phenotype_03").unwrap();
        (model, data)
    }

    fn quick_options() -> SweepOptions {
        SweepOptions {
            fractions: vec![1.0, 0.5],
            seeds: vec![0, 1],
            families: Family::ALL.to_vec(),
            lambda_grid: vec![0.1, 10.0],
            rnn_hidden_grid: vec![4],
            rnn_depth: 1,
            rnn_config: TrainConfig {
                batch_size: 32,
                learning_rate: 5e-3,
                dropout: 0.0,
                max_epochs: 4,
                patience: 4,
                ..TrainConfig::default()
            },
        }
    }

    #[test]
    fn sweep_produces_one_cell_per_combination() {
        let (model, data) = tiny_sweep_setup();
        let result = run_label_fraction_sweep(&model, &data, &quick_options()).unwrap();
        assert_eq!(result.cells.len(), 2 * 2 * 4);
        assert!(!result.test_set_hash.is_empty());
        for cell in &result.cells {
            if cell.status == "ok" {
                let v = cell.test_auroc.unwrap();
                assert!((0.0..=1.0).contains(&v));
            }
        }
        // Fixed test set: recomputing the hash from the inputs matches.
        assert_eq!(result.test_set_hash, super::test_set_hash(&data.test));
    }

    #[test]
    fn sweep_is_deterministic() {
        let (model, data) = tiny_sweep_setup();
        let a = run_label_fraction_sweep(&model, &data, &quick_options()).unwrap();
        let b = run_label_fraction_sweep(&model, &data, &quick_options()).unwrap();
        for (x, y) in a.cells.iter().zip(&b.cells) {
            assert_eq!(x.test_auroc, y.test_auroc);
            assert_eq!(x.status, y.status);
        }
    }

    #[test]
    fn source_leakage_is_rejected() {
        let (model, _) = tiny_sweep_setup();
        let spec = spec();
        let (raw, schema) = generate_synthetic_records(&spec).unwrap();
        // phenotype_01 was a source task of the model.
        let data = TargetTaskData::build(&raw, &schema, 9, "phenotype_01").unwrap();
        assert!(matches!(
            run_label_fraction_sweep(&model, &data, &quick_options()),
            Err(EvalError::TargetInSource(_))
        ));
    }

    #[test]
    fn unknown_target_task_is_rejected() {
        let spec = spec();
        let (raw, schema) = generate_synthetic_records(&spec).unwrap();
        assert!(matches!(
            TargetTaskData::build(&raw, &schema, 9, "nope"),
            Err(EvalError::UnknownTask(_))
        ));
    }

    #[test]
    fn reference_probes_cover_probe_families() {
        let (model, data) = tiny_sweep_setup();
        let probes = fit_reference_probes(&model, &data, &quick_options()).unwrap();
        assert_eq!(probes.len(), 3);
        assert_eq!(
            probes[&Family::FrozenTopLr].num_features(),
            model.stack.hidden_size()
        );
        assert_eq!(
            probes[&Family::FrozenAllLr].num_features(),
            model.stack.feature_size()
        );
        assert_eq!(
            probes[&Family::StatLr].num_features(),
            data.schema.raw_width() * crate::eval::STATS_PER_CHANNEL
        );
    }
}
