//! How the L1 penalty controls feature selection: fit probes across the
//! lambda grid and print the fraction of near-zero weights, ending at the
//! analytic lambda_max where every weight is exactly zero.
//!
//! Run with: cargo run --release --example sparsity_path

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqtl::transfer::{lambda_max, lr_fit_l1, sparsity_fraction, FeatureVector, LassoOptions};

fn main() {
    // A planted linear rule over 40 features, only 6 of which matter.
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let relevant: Vec<usize> = (0..6).map(|i| i * 7).collect();
    let features: Vec<FeatureVector> = (0..300)
        .map(|i| {
            let values: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
            let score: f64 = relevant.iter().map(|&j| values[j]).sum();
            let noisy = score + rng.random_range(-0.8..0.8);
            FeatureVector {
                episode_id: format!("ep{i}"),
                label: u8::from(noisy > 0.0),
                values: Array1::from_vec(values),
            }
        })
        .collect();

    let lmax = lambda_max(&features).unwrap();
    println!("analytic lambda_max = {lmax:.3}\n");
    println!("{:>12} {:>16} {:>16}", "lambda", "nonzero weights", "sparsity");
    for lambda in [0.0, 0.1, 1.0, 10.0, lmax * 0.5, lmax, lmax * 2.0] {
        let probe = lr_fit_l1(&features, lambda, &LassoOptions::default()).unwrap();
        let sparsity = sparsity_fraction(&probe, 0.001);
        let nonzero = probe.weights.iter().filter(|w| w.abs() >= 0.001).count();
        println!("{lambda:>12.3} {nonzero:>16} {sparsity:>16.3}");
    }

    let probe = lr_fit_l1(&features, lmax * 2.0, &LassoOptions::default()).unwrap();
    assert!(probe.weights.iter().all(|w| *w == 0.0));
    println!("\nat lambda >= lambda_max the weight vector is exactly zero");
    println!("intercept settles at the base-rate logit: {:.4}", probe.intercept);
}
