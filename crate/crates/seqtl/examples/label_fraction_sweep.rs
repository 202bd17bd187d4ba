//! Compare model families as the labeled training fraction shrinks:
//! probes on frozen pre-trained features versus a task-specific recurrent
//! classifier and the statistical-feature baseline.
//!
//! Run with: cargo run --release --example label_fraction_sweep
//! (takes a couple of minutes; it trains recurrent baselines per cell)

use seqtl::dataset::{filter_source_split, generate_synthetic_records};
use seqtl::dataset::{encode_split, PhenotypeSignature, SyntheticSpec};
use seqtl::eval::{run_label_fraction_sweep, Family, SweepOptions, TargetTaskData};
use seqtl::pretrain::fit_source;
use seqtl::TrainConfig;
use std::collections::BTreeSet;

fn main() {
    let spec = SyntheticSpec {
        seed: 21,
        n_instances: 700,
        split_fractions: [0.6, 0.2, 0.2],
        n_phenotypes: 5,
        prevalences: vec![0.35, 0.3, 0.3, 0.25, 0.3],
        n_real_channels: 8,
        n_categorical_channels: 1,
        categories_per_channel: 4,
        series_length_range: [24, 30],
        signatures: vec![
            PhenotypeSignature { channels: vec![0, 3], mean_shift: 0.9, trend_slope: 0.012 },
            PhenotypeSignature { channels: vec![1, 4], mean_shift: -0.8, trend_slope: 0.02 },
            PhenotypeSignature { channels: vec![2, 5], mean_shift: 0.7, trend_slope: -0.015 },
            PhenotypeSignature { channels: vec![3, 6], mean_shift: -0.7, trend_slope: 0.018 },
            PhenotypeSignature { channels: vec![4, 7], mean_shift: 0.8, trend_slope: 0.014 },
        ],
        noise_std: 1.0,
        ar_coefficient: 0.5,
    };
    let horizon = 30;
    let (raw, schema) = generate_synthetic_records(&spec).unwrap();
    let split = encode_split(&raw, &schema, horizon).unwrap();

    let target = "phenotype_05";
    let held: BTreeSet<String> = [target.to_string()].into_iter().collect();
    let source = filter_source_split(&split, &held).unwrap();
    let config = TrainConfig {
        learning_rate: 1e-3,
        dropout: 0.3,
        max_epochs: 25,
        patience: 5,
        seed: 5,
        ..TrainConfig::default()
    };
    println!("pre-training the source model...");
    let model = fit_source(&source, &config, 24, 2).unwrap();

    let data = TargetTaskData::build(&raw, &schema, horizon, target).unwrap();
    let options = SweepOptions {
        fractions: vec![1.0, 0.1],
        seeds: vec![0, 1],
        families: Family::ALL.to_vec(),
        rnn_hidden_grid: vec![16, 32],
        rnn_config: TrainConfig {
            learning_rate: 1e-3,
            dropout: 0.3,
            max_epochs: 25,
            patience: 5,
            ..TrainConfig::default()
        },
        ..SweepOptions::default()
    };
    println!("running the sweep (this trains recurrent baselines per cell)...");
    let result = run_label_fraction_sweep(&model, &data, &options).unwrap();

    println!("\n{:<10} {:>8} {:>6} {:>10}  status", "family", "fraction", "seed", "auroc");
    for cell in &result.cells {
        let auroc = cell
            .test_auroc
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{:<10} {:>8} {:>6} {:>10}  {}",
            cell.family.to_string(),
            cell.fraction,
            cell.seed,
            auroc,
            cell.status
        );
    }
    for family in Family::ALL {
        let full = result.mean_auroc(family, 1.0).unwrap_or(f64::NAN);
        let small = result.mean_auroc(family, 0.1).unwrap_or(f64::NAN);
        println!("{family}: mean AUROC {full:.4} at 100% labels, {small:.4} at 10%");
    }
}
