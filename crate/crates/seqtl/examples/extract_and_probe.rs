//! Transfer to a held-out task: extract frozen features from a pre-trained
//! network, fit the sparse probe with lambda selection, and score it.
//!
//! Run with: cargo run --release --example extract_and_probe

use seqtl::dataset::{encode_record, filter_source_split, generate_synthetic_records};
use seqtl::dataset::{PhenotypeSignature, SyntheticSpec};
use seqtl::eval::{auroc, ScoredSet};
use seqtl::pretrain::fit_source;
use seqtl::transfer::{extract_features, lambda_sweep, lr_predict, LassoOptions};
use seqtl::{LayerSelection, TrainConfig};
use std::collections::BTreeSet;

fn main() {
    let spec = SyntheticSpec {
        seed: 9,
        n_instances: 500,
        split_fractions: [0.6, 0.2, 0.2],
        n_phenotypes: 4,
        prevalences: vec![0.35, 0.3, 0.3, 0.3],
        n_real_channels: 6,
        n_categorical_channels: 1,
        categories_per_channel: 4,
        series_length_range: [20, 28],
        signatures: vec![
            PhenotypeSignature { channels: vec![0, 2], mean_shift: 0.9, trend_slope: 0.012 },
            PhenotypeSignature { channels: vec![1, 3], mean_shift: -0.8, trend_slope: 0.02 },
            PhenotypeSignature { channels: vec![2, 4], mean_shift: 0.8, trend_slope: -0.015 },
            PhenotypeSignature { channels: vec![3, 5], mean_shift: 0.85, trend_slope: 0.018 },
        ],
        noise_std: 1.0,
        ar_coefficient: 0.5,
    };
    let (raw, schema) = generate_synthetic_records(&spec).unwrap();
    let horizon = 28;
    let split = seqtl::dataset::encode_split(&raw, &schema, horizon).unwrap();

    // Pre-train on everything except the transfer target.
    let target = "phenotype_04";
    let held: BTreeSet<String> = [target.to_string()].into_iter().collect();
    let source = filter_source_split(&split, &held).unwrap();
    let config = TrainConfig {
        learning_rate: 1e-3,
        dropout: 0.3,
        max_epochs: 20,
        patience: 5,
        seed: 2,
        ..TrainConfig::default()
    };
    let model = fit_source(&source, &config, 16, 2).unwrap();

    // Frozen features for the target task, top layer only.
    let tasks = vec![target.to_string()];
    let featurize = |records: &[seqtl::EpisodeRecord]| {
        records
            .iter()
            .map(|r| {
                let encoded = encode_record(r, &schema, horizon, &tasks).unwrap();
                extract_features(&model, &encoded, LayerSelection::Top).unwrap()
            })
            .collect::<Vec<_>>()
    };
    let train = featurize(&raw.train);
    let val = featurize(&raw.validation);
    let test = featurize(&raw.test);
    println!("feature width: {}", train[0].values.len());

    let grid = [0.1, 1.0, 10.0, 100.0, 1000.0, 10000.0];
    let options = LassoOptions {
        layers_used: LayerSelection::Top,
        ..LassoOptions::default()
    };
    let (probe, scores) = lambda_sweep(&train, &val, &grid, &options).unwrap();
    for s in &scores {
        println!(
            "lambda {:>8}: validation NLL {:.4}, sparsity {:.3}",
            s.lambda, s.val_nll, s.sparsity
        );
    }
    println!("selected lambda = {}", probe.lambda);

    let pairs: Vec<(f64, u8)> = test
        .iter()
        .map(|f| (lr_predict(&probe, f).unwrap(), f.label))
        .collect();
    let set = ScoredSet {
        task: target.to_string(),
        pairs,
    };
    println!("test AUROC on {target}: {:.4}", auroc(&set).unwrap());
}
