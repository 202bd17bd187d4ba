//! Pre-train the multi-task GRU on a synthetic cohort, holding one
//! phenotype out for later transfer experiments, and save the model file.
//!
//! Run with: cargo run --release --example pretrain_source_model

use seqtl::dataset::{filter_source_split, generate_synthetic, PhenotypeSignature, SyntheticSpec};
use seqtl::pretrain::fit_source;
use seqtl::rnn::ModelMetadata;
use seqtl::TrainConfig;
use std::collections::BTreeSet;

fn main() {
    let spec = SyntheticSpec {
        seed: 3,
        n_instances: 600,
        split_fractions: [0.7, 0.15, 0.15],
        n_phenotypes: 5,
        prevalences: vec![0.35, 0.3, 0.3, 0.25, 0.3],
        n_real_channels: 8,
        n_categorical_channels: 1,
        categories_per_channel: 4,
        series_length_range: [24, 30],
        signatures: vec![
            PhenotypeSignature { channels: vec![0, 3], mean_shift: 0.9, trend_slope: 0.01 },
            PhenotypeSignature { channels: vec![1, 4], mean_shift: -0.8, trend_slope: 0.02 },
            PhenotypeSignature { channels: vec![2, 5], mean_shift: 0.7, trend_slope: -0.01 },
            PhenotypeSignature { channels: vec![3, 6], mean_shift: -0.7, trend_slope: 0.015 },
            PhenotypeSignature { channels: vec![4, 7], mean_shift: 0.8, trend_slope: 0.012 },
        ],
        noise_std: 1.0,
        ar_coefficient: 0.5,
    };
    let (split, schema) = generate_synthetic(&spec).expect("spec is valid");

    // The held-out phenotype must not influence pre-training: its positives
    // are removed from train/validation and its label column is dropped.
    let held: BTreeSet<String> = ["phenotype_05".to_string()].into_iter().collect();
    let source = filter_source_split(&split, &held).expect("tasks exist");
    println!(
        "source tasks: {:?} ({} train episodes after leakage filtering)",
        source.task_names,
        source.train.len()
    );

    let config = TrainConfig {
        learning_rate: 1e-3,
        dropout: 0.3,
        max_epochs: 25,
        patience: 5,
        seed: 11,
        ..TrainConfig::default()
    };
    let model = fit_source(&source, &config, 24, 2).expect("training converges");
    for stats in model.history.iter().rev().take(3).rev() {
        println!(
            "epoch {}: train loss {:.4}, val loss {:.4}",
            stats.epoch, stats.train_loss, stats.val_loss
        );
    }
    println!(
        "best epoch {} with validation loss {:.4}",
        model.best_epoch, model.best_val_loss
    );

    let metadata = ModelMetadata {
        schema_hash: schema.hash(),
        train_config: serde_json::to_value(&config).unwrap(),
        seed: config.seed,
        task_names: model.task_names.clone(),
    };
    let bytes = model.to_model_bytes(&metadata).unwrap();
    std::fs::write("/tmp/seqtl-model.json", &bytes).unwrap();
    println!("saved /tmp/seqtl-model.json ({} bytes)", bytes.len());
}
