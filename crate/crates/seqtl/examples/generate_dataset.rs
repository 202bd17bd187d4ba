//! Generate a small synthetic cohort and write it as a dataset directory.
//!
//! Run with: cargo run --release --example generate_dataset -- /tmp/seqtl-data

use seqtl::dataset::{generate_synthetic_records, save_dataset, PhenotypeSignature, SyntheticSpec};

fn main() {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "/tmp/seqtl-data".to_string());

    let spec = SyntheticSpec {
        seed: 42,
        n_instances: 400,
        split_fractions: [0.7, 0.15, 0.15],
        n_phenotypes: 4,
        prevalences: vec![0.35, 0.3, 0.25, 0.3],
        n_real_channels: 6,
        n_categorical_channels: 1,
        categories_per_channel: 4,
        series_length_range: [24, 32],
        signatures: vec![
            PhenotypeSignature {
                channels: vec![0, 2],
                mean_shift: 0.9,
                trend_slope: 0.01,
            },
            PhenotypeSignature {
                channels: vec![1, 3],
                mean_shift: -0.8,
                trend_slope: 0.02,
            },
            PhenotypeSignature {
                channels: vec![2, 4],
                mean_shift: 0.7,
                trend_slope: -0.015,
            },
            PhenotypeSignature {
                channels: vec![3, 5],
                mean_shift: -0.6,
                trend_slope: 0.012,
            },
        ],
        noise_std: 1.0,
        ar_coefficient: 0.5,
    };

    let (raw, schema) = generate_synthetic_records(&spec).expect("spec is valid");
    save_dataset(&raw, &schema, std::path::Path::new(&out)).expect("directory is writable");

    println!(
        "wrote {} train / {} val / {} test episodes to {out}",
        raw.train.len(),
        raw.validation.len(),
        raw.test.len()
    );
    println!("tasks: {:?}", raw.task_names);
    println!("encoded width n = {}", schema.encoded_width());
    let positives = raw
        .train
        .iter()
        .filter(|r| r.labels["phenotype_01"] == 1)
        .count();
    println!(
        "phenotype_01 train prevalence: {:.3}",
        positives as f64 / raw.train.len() as f64
    );
}
