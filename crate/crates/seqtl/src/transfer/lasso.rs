use super::{FeatureVector, LayerSelection, LrProbe, TransferError};
use ndarray::{Array1, Array2, ArrayView1};

/// Proximal operator of the L1 term: `sign(v) * max(|v| - t, 0)`.
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Solver settings. The objective is the summed negative log-likelihood
/// plus `lambda * ||w||_1` (intercept unpenalized); iteration stops when the
/// objective decrease stays below `tol` for `stall_iterations` consecutive
/// iterations, or at `max_iterations`.
#[derive(Clone, Copy, Debug)]
pub struct LassoOptions {
    pub max_iterations: usize,
    pub tol: f64,
    pub stall_iterations: usize,
    /// Stamped into the fitted probe's metadata.
    pub layers_used: LayerSelection,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            max_iterations: 100_000,
            tol: 1e-9,
            stall_iterations: 5,
            layers_used: LayerSelection::All,
        }
    }
}

/// A fit plus its full objective trace, for convergence diagnostics.
#[derive(Clone, Debug)]
pub struct LassoFit {
    pub probe: LrProbe,
    /// Objective value at every iterate, starting from the zero vector.
    pub objectives: Vec<f64>,
    pub iterations: usize,
}

/// Per-candidate record of a lambda sweep.
#[derive(Clone, Copy, Debug)]
pub struct LambdaScore {
    pub lambda: f64,
    /// Mean unpenalized negative log-likelihood on validation — the
    /// selection metric.
    pub val_nll: f64,
    /// Summed validation NLL plus the L1 penalty, recorded alongside since
    /// either could be read as "the objective on the validation set".
    pub val_objective: f64,
    pub sparsity: f64,
}

fn softplus(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        x.exp()
    } else {
        (1.0 + x.exp()).ln()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Summed binary NLL from logits: `softplus(-z)` for positives,
/// `softplus(z)` for negatives. Stable for any logit magnitude.
fn summed_nll(logits: &Array1<f64>, labels: &Array1<f64>) -> f64 {
    logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| if y == 1.0 { softplus(-z) } else { softplus(z) })
        .sum()
}

struct Standardized {
    x: Array2<f64>,
    y: Array1<f64>,
    means: Array1<f64>,
    stds: Array1<f64>,
}

fn standardize(features: &[FeatureVector]) -> Result<Standardized, TransferError> {
    let first = features.first().ok_or(TransferError::EmptyFeatures)?;
    let m = first.values.len();
    let n = features.len();
    for f in features {
        if f.values.len() != m {
            return Err(TransferError::LengthMismatch {
                expected: m,
                got: f.values.len(),
            });
        }
    }
    let mut x = Array2::<f64>::zeros((n, m));
    let mut y = Array1::<f64>::zeros(n);
    for (i, f) in features.iter().enumerate() {
        x.row_mut(i).assign(&f.values);
        y[i] = f64::from(f.label);
    }
    let means = x.mean_axis(ndarray::Axis(0)).expect("n >= 1");
    let mut stds = Array1::<f64>::zeros(m);
    for j in 0..m {
        let col = x.column(j);
        let var = col.iter().map(|v| (v - means[j]).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        // Constant features standardize with unit scale instead of blowing up.
        stds[j] = if std < 1e-12 { 1.0 } else { std };
    }
    for j in 0..m {
        let mean = means[j];
        let std = stds[j];
        x.column_mut(j).mapv_inplace(|v| (v - mean) / std);
    }
    Ok(Standardized { x, y, means, stds })
}

/// Upper bound on the squared spectral norm of `[X | 1]` by power iteration
/// (deterministic start vector, slight inflation at the end so the ISTA
/// step `4 / bound` never exceeds the true `1 / L`).
fn squared_spectral_bound(x: &Array2<f64>) -> f64 {
    let (n, m) = x.dim();
    let mut v = Array1::<f64>::from_shape_fn(m + 1, |j| {
        1.0 + ((j as u64).wrapping_mul(2_654_435_761) % 1000) as f64 / 1000.0
    });
    let norm = v.dot(&v).sqrt();
    v.mapv_inplace(|e| e / norm);

    let mut estimate = 0.0f64;
    for _ in 0..300 {
        // u = [X | 1] v ; next = [X | 1]^T u
        let mut u = x.dot(&v.slice(ndarray::s![..m]));
        u += v[m];
        let lead = u.dot(&u); // Rayleigh quotient, since ||v|| = 1
        let mut next = Array1::<f64>::zeros(m + 1);
        next.slice_mut(ndarray::s![..m]).assign(&x.t().dot(&u));
        next[m] = u.sum();
        let next_norm = next.dot(&next).sqrt();
        if next_norm == 0.0 {
            return n as f64; // only possible without data columns
        }
        next.mapv_inplace(|e| e / next_norm);
        let done = (lead - estimate).abs() <= 1e-12 * lead.max(1.0);
        estimate = lead;
        v = next;
        if done {
            break;
        }
    }
    (estimate * (1.0 + 1e-6)).max(1e-12)
}

/// Fits the L1-penalized logistic probe by proximal gradient descent
/// (ISTA) with a fixed Lipschitz step, returning the objective trace.
///
/// Features are standardized with their own statistics (the caller passes
/// training features only); weights start at zero. Each iteration takes a
/// gradient step on the summed NLL and soft-thresholds the weights with
/// threshold `step * lambda`; the intercept is never penalized. With the
/// step at most `1 / L` the objective is non-increasing.
pub fn lr_fit_l1_detailed(
    features: &[FeatureVector],
    lambda: f64,
    options: &LassoOptions,
) -> Result<LassoFit, TransferError> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(TransferError::InvalidLambda(lambda));
    }
    let data = standardize(features)?;
    let positives = data.y.iter().filter(|&&y| y == 1.0).count();
    if positives == 0 || positives == data.y.len() {
        return Err(TransferError::DegenerateLabels);
    }

    let m = data.x.ncols();
    let step = 4.0 / squared_spectral_bound(&data.x);

    let mut w = Array1::<f64>::zeros(m);
    let mut b = 0.0f64;
    let mut objectives = Vec::new();
    let mut stall = 0usize;
    let mut iterations = 0usize;

    loop {
        let mut logits = data.x.dot(&w);
        logits += b;
        let objective = summed_nll(&logits, &data.y) + lambda * w.iter().map(|v| v.abs()).sum::<f64>();
        if let Some(&previous) = objectives.last() {
            if previous - objective < options.tol {
                stall += 1;
            } else {
                stall = 0;
            }
        }
        objectives.push(objective);
        if stall >= options.stall_iterations || iterations >= options.max_iterations {
            break;
        }

        let residual = logits.mapv(sigmoid) - &data.y;
        let grad_w = data.x.t().dot(&residual);
        let grad_b = residual.sum();
        let threshold = step * lambda;
        for j in 0..m {
            w[j] = soft_threshold(w[j] - step * grad_w[j], threshold);
        }
        b -= step * grad_b;
        iterations += 1;
    }

    Ok(LassoFit {
        probe: LrProbe {
            weights: w,
            intercept: b,
            lambda,
            feature_means: data.means,
            feature_stds: data.stds,
            layers_used: options.layers_used,
        },
        objectives,
        iterations,
    })
}

pub fn lr_fit_l1(
    features: &[FeatureVector],
    lambda: f64,
    options: &LassoOptions,
) -> Result<LrProbe, TransferError> {
    Ok(lr_fit_l1_detailed(features, lambda, options)?.probe)
}

fn probe_logit(probe: &LrProbe, values: ArrayView1<f64>) -> Result<f64, TransferError> {
    if values.len() != probe.num_features() {
        return Err(TransferError::LengthMismatch {
            expected: probe.num_features(),
            got: values.len(),
        });
    }
    let mut z = probe.intercept;
    for j in 0..values.len() {
        z += probe.weights[j] * (values[j] - probe.feature_means[j]) / probe.feature_stds[j];
    }
    Ok(z)
}

/// Positive-class probability for one feature vector, standardized with the
/// probe's stored training statistics.
pub fn lr_predict(probe: &LrProbe, feature: &FeatureVector) -> Result<f64, TransferError> {
    Ok(sigmoid(probe_logit(probe, feature.values.view())?))
}

/// Smallest penalty at which the all-zero weight vector is optimal:
/// `max_j |sum_i x_ij (y_i - mean(y))|` on standardized features.
pub fn lambda_max(features: &[FeatureVector]) -> Result<f64, TransferError> {
    let data = standardize(features)?;
    let y_bar = data.y.mean().expect("non-empty");
    let centered = &data.y - y_bar;
    let correlations = data.x.t().dot(&centered);
    Ok(correlations.iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
}

/// Fits one probe per grid value and keeps the one with the lowest mean
/// unpenalized validation NLL; exact ties go to the larger lambda (the
/// sparser probe). Scores are returned in ascending-lambda order.
pub fn lambda_sweep(
    train: &[FeatureVector],
    validation: &[FeatureVector],
    grid: &[f64],
    options: &LassoOptions,
) -> Result<(LrProbe, Vec<LambdaScore>), TransferError> {
    if grid.is_empty() {
        return Err(TransferError::EmptyGrid);
    }
    if validation.is_empty() {
        return Err(TransferError::EmptyFeatures);
    }
    let mut lambdas = grid.to_vec();
    for l in &lambdas {
        if !l.is_finite() || *l < 0.0 {
            return Err(TransferError::InvalidLambda(*l));
        }
    }
    lambdas.sort_by(f64::total_cmp);

    let mut scores = Vec::with_capacity(lambdas.len());
    let mut best: Option<(f64, LrProbe)> = None;
    for &lambda in &lambdas {
        let probe = lr_fit_l1(train, lambda, options)?;
        let logits = validation
            .iter()
            .map(|f| probe_logit(&probe, f.values.view()))
            .collect::<Result<Vec<f64>, _>>()?;
        let labels: Vec<f64> = validation.iter().map(|f| f64::from(f.label)).collect();
        let nll_sum = summed_nll(&Array1::from_vec(logits), &Array1::from_vec(labels));
        let val_nll = nll_sum / validation.len() as f64;
        let val_objective =
            nll_sum + lambda * probe.weights.iter().map(|v| v.abs()).sum::<f64>();
        scores.push(LambdaScore {
            lambda,
            val_nll,
            val_objective,
            sparsity: sparsity_fraction(&probe, 0.001),
        });
        let replace = match &best {
            None => true,
            Some((best_nll, _)) => val_nll <= *best_nll,
        };
        if replace {
            best = Some((val_nll, probe));
        }
    }
    Ok((best.expect("grid is non-empty").1, scores))
}

/// Fraction of probe weights with `|w| < threshold`; the intercept does not
/// count.
pub fn sparsity_fraction(probe: &LrProbe, threshold: f64) -> f64 {
    if probe.weights.is_empty() {
        return 1.0;
    }
    let small = probe.weights.iter().filter(|w| w.abs() < threshold).count();
    small as f64 / probe.weights.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    /// Random features with labels from a planted linear rule plus noise,
    /// guaranteed non-separable via label flips.
    fn noisy_features(n: usize, m: usize, seed: u64) -> Vec<FeatureVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let planted: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        (0..n)
            .map(|i| {
                let values: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
                let score: f64 = planted.iter().zip(&values).map(|(a, b)| a * b).sum();
                let mut label = u8::from(score > 0.0);
                if rng.random::<f64>() < 0.25 {
                    label = 1 - label;
                }
                FeatureVector {
                    episode_id: format!("f{i}"),
                    label,
                    values: Array1::from_vec(values),
                }
            })
            .collect()
    }

    #[test]
    fn soft_threshold_matches_definition() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.0, 0.0), 0.0);
    }

    #[test]
    fn lambda_at_or_above_lambda_max_zeroes_every_weight() {
        let features = noisy_features(100, 5, 3);
        let lmax = lambda_max(&features).unwrap();
        let y_bar = features.iter().filter(|f| f.label == 1).count() as f64 / 100.0;
        for factor in [1.0 + 1e-10, 1.5, 20.0] {
            let probe =
                lr_fit_l1(&features, lmax * factor, &LassoOptions::default()).unwrap();
            assert!(
                probe.weights.iter().all(|w| *w == 0.0),
                "nonzero weight at factor {factor}: {:?}",
                probe.weights
            );
            assert!(
                (probe.intercept - logit(y_bar)).abs() < 1e-6,
                "intercept {} vs logit(base rate) {}",
                probe.intercept,
                logit(y_bar)
            );
            assert_eq!(sparsity_fraction(&probe, 0.001), 1.0);
        }
    }

    #[test]
    fn objective_never_increases() {
        let features = noisy_features(60, 8, 11);
        let lmax = lambda_max(&features).unwrap();
        for lambda in [0.0, lmax * 0.05, lmax * 0.4] {
            let fit = lr_fit_l1_detailed(&features, lambda, &LassoOptions::default()).unwrap();
            for pair in fit.objectives.windows(2) {
                assert!(
                    pair[1] <= pair[0] + 1e-12,
                    "objective rose from {} to {} at lambda {lambda}",
                    pair[0],
                    pair[1]
                );
            }
        }
    }

    /// Dense Newton solver for the unpenalized problem, used as an oracle.
    fn newton_logistic(features: &[FeatureVector]) -> (Vec<f64>, f64) {
        let data = standardize(features).unwrap();
        let (n, m) = data.x.dim();
        let dim = m + 1;
        let mut beta = vec![0.0f64; dim];
        for _ in 0..100 {
            let mut grad = vec![0.0f64; dim];
            let mut hess = vec![vec![0.0f64; dim]; dim];
            for i in 0..n {
                let mut z = beta[m];
                for j in 0..m {
                    z += beta[j] * data.x[(i, j)];
                }
                let p = sigmoid(z);
                let r = p - data.y[i];
                let s = p * (1.0 - p);
                for j in 0..dim {
                    let xj = if j == m { 1.0 } else { data.x[(i, j)] };
                    grad[j] += r * xj;
                    for k in 0..dim {
                        let xk = if k == m { 1.0 } else { data.x[(i, k)] };
                        hess[j][k] += s * xj * xk;
                    }
                }
            }
            // Solve hess * delta = grad by Gaussian elimination.
            let mut a = hess.clone();
            let mut rhs = grad.clone();
            for col in 0..dim {
                let pivot = (col..dim)
                    .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
                    .unwrap();
                a.swap(col, pivot);
                rhs.swap(col, pivot);
                let diag = a[col][col];
                for row in (col + 1)..dim {
                    let f = a[row][col] / diag;
                    for k in col..dim {
                        a[row][k] -= f * a[col][k];
                    }
                    rhs[row] -= f * rhs[col];
                }
            }
            let mut delta = vec![0.0f64; dim];
            for row in (0..dim).rev() {
                let mut v = rhs[row];
                for k in (row + 1)..dim {
                    v -= a[row][k] * delta[k];
                }
                delta[row] = v / a[row][row];
            }
            let shift: f64 = delta.iter().map(|d| d.abs()).fold(0.0, f64::max);
            for j in 0..dim {
                beta[j] -= delta[j];
            }
            if shift < 1e-12 {
                break;
            }
        }
        (beta[..m].to_vec(), beta[m])
    }

    #[test]
    fn unpenalized_fit_matches_newton_oracle() {
        let features = noisy_features(20, 5, 7);
        let probe = lr_fit_l1(&features, 0.0, &LassoOptions::default()).unwrap();
        let (w_star, b_star) = newton_logistic(&features);
        let data = standardize(&features).unwrap();
        for i in 0..20 {
            let mut z_ista = probe.intercept;
            let mut z_newton = b_star;
            for j in 0..5 {
                z_ista += probe.weights[j] * data.x[(i, j)];
                z_newton += w_star[j] * data.x[(i, j)];
            }
            let diff = (sigmoid(z_ista) - sigmoid(z_newton)).abs();
            assert!(diff < 1e-4, "instance {i}: probability gap {diff}");
        }
    }

    /// Coordinate-descent reference (quadratic-approximation updates with
    /// soft thresholding); an independent route to the same optimum.
    fn coordinate_descent(features: &[FeatureVector], lambda: f64, sweeps: usize) -> (Array1<f64>, f64) {
        let data = standardize(features).unwrap();
        let (n, m) = data.x.dim();
        let mut w = Array1::<f64>::zeros(m);
        let mut b = 0.0f64;
        for _ in 0..sweeps {
            for j in 0..m {
                let mut grad = 0.0;
                let mut curv = 0.0;
                for i in 0..n {
                    let mut z = b;
                    for k in 0..m {
                        z += w[k] * data.x[(i, k)];
                    }
                    let p = sigmoid(z);
                    grad += data.x[(i, j)] * (p - data.y[i]);
                    curv += data.x[(i, j)].powi(2) * p * (1.0 - p);
                }
                if curv > 0.0 {
                    w[j] = soft_threshold(curv * w[j] - grad, lambda) / curv;
                }
            }
            let mut grad_b = 0.0;
            let mut curv_b = 0.0;
            for i in 0..n {
                let mut z = b;
                for k in 0..m {
                    z += w[k] * data.x[(i, k)];
                }
                let p = sigmoid(z);
                grad_b += p - data.y[i];
                curv_b += p * (1.0 - p);
            }
            b -= grad_b / curv_b;
        }
        (w, b)
    }

    #[test]
    fn ista_and_coordinate_descent_reach_the_same_objective() {
        let features = noisy_features(40, 6, 19);
        let lmax = lambda_max(&features).unwrap();
        let lambda = lmax * 0.2;
        let fit = lr_fit_l1_detailed(&features, lambda, &LassoOptions::default()).unwrap();
        let (w_cd, b_cd) = coordinate_descent(&features, lambda, 300);

        let data = standardize(&features).unwrap();
        let objective = |w: &Array1<f64>, b: f64| -> f64 {
            let mut logits = data.x.dot(w);
            logits += b;
            summed_nll(&logits, &data.y) + lambda * w.iter().map(|v| v.abs()).sum::<f64>()
        };
        let o_ista = objective(&fit.probe.weights, fit.probe.intercept);
        let o_cd = objective(&w_cd, b_cd);
        assert!(
            (o_ista - o_cd).abs() < 1e-5 * o_cd.abs().max(1.0),
            "objectives differ: ista {o_ista} vs cd {o_cd}"
        );
    }

    #[test]
    fn predict_handles_the_fixed_cases() {
        let probe = LrProbe {
            weights: Array1::zeros(3),
            intercept: 0.0,
            lambda: 1.0,
            feature_means: Array1::zeros(3),
            feature_stds: Array1::from_vec(vec![1.0, 1.0, 1.0]),
            layers_used: LayerSelection::Top,
        };
        let f = FeatureVector {
            episode_id: "x".into(),
            label: 0,
            values: Array1::from_vec(vec![5.0, -3.0, 0.1]),
        };
        assert_eq!(lr_predict(&probe, &f).unwrap(), 0.5);

        let mut probe = probe;
        probe.intercept = logit(0.15);
        assert!((lr_predict(&probe, &f).unwrap() - 0.15).abs() < 1e-12);

        probe.weights = Array1::from_vec(vec![0.4, -0.2, 1.1]);
        probe.feature_means = Array1::from_vec(vec![0.5, 0.5, 0.5]);
        probe.feature_stds = Array1::from_vec(vec![2.0, 1.0, 0.5]);
        let mut z = probe.intercept;
        for j in 0..3 {
            z += probe.weights[j] * (f.values[j] - probe.feature_means[j]) / probe.feature_stds[j];
        }
        assert!((lr_predict(&probe, &f).unwrap() - sigmoid(z)).abs() < 1e-15);

        let short = FeatureVector {
            episode_id: "y".into(),
            label: 0,
            values: Array1::zeros(2),
        };
        assert!(lr_predict(&probe, &short).is_err());
    }

    #[test]
    fn sweep_selects_by_validation_nll_with_ties_to_larger_lambda() {
        // One cohort, split so train and validation share the planted rule.
        let all = noisy_features(120, 5, 23);
        let (train, val) = all.split_at(80);
        let (train, val) = (train.to_vec(), val.to_vec());
        let lmax = lambda_max(&train).unwrap();
        let (best, scores) = lambda_sweep(
            &train,
            &val,
            &[lmax * 2.0, 0.0],
            &LassoOptions::default(),
        )
        .unwrap();
        assert_eq!(scores.len(), 2);
        assert!(scores[0].lambda < scores[1].lambda);
        // The informative fit beats the intercept-only fit on validation.
        assert!(scores[0].val_nll < scores[1].val_nll);
        assert_eq!(best.lambda, 0.0);

        // Constant features make every lambda identical, forcing the tie.
        let degenerate: Vec<FeatureVector> = (0..20)
            .map(|i| FeatureVector {
                episode_id: format!("d{i}"),
                label: (i % 2) as u8,
                values: Array1::from_vec(vec![3.0, -1.0]),
            })
            .collect();
        let (best, scores) =
            lambda_sweep(&degenerate, &degenerate, &[0.5, 2.0], &LassoOptions::default()).unwrap();
        assert_eq!(scores[0].val_nll, scores[1].val_nll);
        assert_eq!(best.lambda, 2.0);

        let (single, _) =
            lambda_sweep(&train, &val, &[7.5], &LassoOptions::default()).unwrap();
        assert_eq!(single.lambda, 7.5);

        assert!(matches!(
            lambda_sweep(&train, &val, &[], &LassoOptions::default()),
            Err(TransferError::EmptyGrid)
        ));
    }

    #[test]
    fn sparsity_fraction_counts_small_weights_only() {
        let mut probe = LrProbe {
            weights: Array1::from_vec(vec![0.5, 0.0005, -0.002]),
            intercept: 9.0,
            lambda: 0.0,
            feature_means: Array1::zeros(3),
            feature_stds: Array1::from_vec(vec![1.0; 3]),
            layers_used: LayerSelection::All,
        };
        assert!((sparsity_fraction(&probe, 0.001) - 1.0 / 3.0).abs() < 1e-15);
        probe.weights.fill(0.0);
        assert_eq!(sparsity_fraction(&probe, 0.001), 1.0);
    }

    #[test]
    fn single_class_labels_are_rejected() {
        let features: Vec<FeatureVector> = (0..10)
            .map(|i| FeatureVector {
                episode_id: format!("s{i}"),
                label: 1,
                values: Array1::from_vec(vec![i as f64]),
            })
            .collect();
        assert!(matches!(
            lr_fit_l1(&features, 1.0, &LassoOptions::default()),
            Err(TransferError::DegenerateLabels)
        ));
    }

    #[test]
    fn standardization_ignores_validation_data() {
        let train = noisy_features(50, 4, 31);
        let val_a = noisy_features(30, 4, 32);
        let val_b = noisy_features(30, 4, 33);
        let opts = LassoOptions::default();
        let (probe_a, _) = lambda_sweep(&train, &val_a, &[1.0], &opts).unwrap();
        let (probe_b, _) = lambda_sweep(&train, &val_b, &[1.0], &opts).unwrap();
        assert_eq!(probe_a.feature_means, probe_b.feature_means);
        assert_eq!(probe_a.feature_stds, probe_b.feature_stds);
        assert_eq!(probe_a.weights, probe_b.weights);
    }
}
