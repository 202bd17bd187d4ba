use super::{GruLayerParams, GruStack, HeadParams, ModelError};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Deterministic parameter initialization from a ChaCha8 stream.
///
/// Input-to-hidden matrices (and the head) draw uniformly from
/// `±sqrt(6 / (fan_in + fan_out))`; recurrent matrices are orthogonal
/// (Gram-Schmidt on a standard-normal square matrix); biases start at zero.
pub fn init_params(
    input_size: usize,
    hidden_size: usize,
    depth: usize,
    num_tasks: usize,
    seed: u64,
) -> Result<(GruStack, HeadParams), ModelError> {
    if input_size == 0 || hidden_size == 0 || depth == 0 || num_tasks == 0 {
        return Err(ModelError::Dimension(
            "all model dimensions must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut layers = Vec::with_capacity(depth);
    for l in 0..depth {
        let d_in = if l == 0 { input_size } else { hidden_size };
        layers.push(GruLayerParams {
            w_reset: glorot_uniform(hidden_size, d_in, &mut rng),
            w_update: glorot_uniform(hidden_size, d_in, &mut rng),
            w_cand: glorot_uniform(hidden_size, d_in, &mut rng),
            u_reset: orthogonal(hidden_size, &mut rng),
            u_update: orthogonal(hidden_size, &mut rng),
            u_cand: orthogonal(hidden_size, &mut rng),
            b_reset: Array1::zeros(hidden_size),
            b_update: Array1::zeros(hidden_size),
            b_cand: Array1::zeros(hidden_size),
        });
    }
    let head = HeadParams {
        weights: glorot_uniform(num_tasks, hidden_size, &mut rng),
        bias: Array1::zeros(num_tasks),
    };
    Ok((GruStack::new(layers)?, head))
}

fn glorot_uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
}

/// Orthogonal square matrix via modified Gram-Schmidt with a second
/// re-orthogonalization pass. A standard-normal matrix is full rank with
/// probability one, so the column norms never vanish.
fn orthogonal(size: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut q = Array2::from_shape_fn((size, size), |_| rng.sample::<f64, _>(StandardNormal));
    for j in 0..size {
        for _ in 0..2 {
            for i in 0..j {
                let proj = q.column(i).dot(&q.column(j));
                let qi = q.column(i).to_owned();
                q.column_mut(j).scaled_add(-proj, &qi);
            }
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        q.column_mut(j).mapv_inplace(|v| v / norm);
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_parameters() {
        let (s1, h1) = init_params(5, 7, 2, 3, 99).unwrap();
        let (s2, h2) = init_params(5, 7, 2, 3, 99).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(h1, h2);
        let (s3, _) = init_params(5, 7, 2, 3, 100).unwrap();
        assert_ne!(s1, s3);
    }

    #[test]
    fn recurrent_matrices_are_orthogonal() {
        let (stack, _) = init_params(6, 32, 2, 2, 3).unwrap();
        for layer in &stack.layers {
            for u in [&layer.u_reset, &layer.u_update, &layer.u_cand] {
                let gram = u.t().dot(u);
                for i in 0..32 {
                    for j in 0..32 {
                        let expect = if i == j { 1.0 } else { 0.0 };
                        assert!(
                            (gram[(i, j)] - expect).abs() < 1e-8,
                            "gram[{i},{j}] = {}",
                            gram[(i, j)]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn glorot_bounds_and_zero_biases() {
        let (stack, head) = init_params(10, 4, 2, 3, 12).unwrap();
        let limit0 = (6.0f64 / (4.0 + 10.0)).sqrt();
        assert!(stack.layers[0].w_reset.iter().all(|v| v.abs() < limit0));
        assert!(stack.layers[0].b_reset.iter().all(|v| *v == 0.0));
        assert!(head.bias.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_dimensions_are_rejected() {
        assert!(init_params(0, 4, 2, 1, 0).is_err());
        assert!(init_params(4, 0, 2, 1, 0).is_err());
        assert!(init_params(4, 4, 0, 1, 0).is_err());
        assert!(init_params(4, 4, 2, 0, 0).is_err());
    }
}
