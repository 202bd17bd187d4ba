use super::TrainError;
use ndarray::ArrayView2;

const PROB_CLIP: f64 = 1e-12;

/// Mean binary cross-entropy over a `B x K` prediction batch: predictions
/// are clipped to `[1e-12, 1 - 1e-12]` before the logs, so the result is
/// always finite and non-negative.
pub fn multilabel_cross_entropy(
    predictions: ArrayView2<f64>,
    targets: ArrayView2<f64>,
) -> Result<f64, TrainError> {
    if predictions.dim() != targets.dim() {
        return Err(TrainError::Shape(format!(
            "predictions are {:?}, targets are {:?}",
            predictions.dim(),
            targets.dim()
        )));
    }
    if predictions.is_empty() {
        return Err(TrainError::Shape("empty prediction batch".into()));
    }
    let tasks = predictions.ncols() as f64;
    let mut total = 0.0;
    for (pred_row, target_row) in predictions.rows().into_iter().zip(targets.rows()) {
        let mut row = 0.0;
        for (p, y) in pred_row.iter().zip(target_row) {
            let p = p.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
            row -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        }
        total += row / tasks;
    }
    Ok(total / predictions.nrows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_half_predictions_cost_ln_two() {
        let preds = array![[0.5, 0.5], [0.5, 0.5]];
        let targets = array![[1.0, 0.0], [0.0, 1.0]];
        let loss = multilabel_cross_entropy(preds.view(), targets.view()).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn perfect_predictions_cost_almost_nothing() {
        let preds = array![[1.0, 0.0]];
        let targets = array![[1.0, 0.0]];
        let loss = multilabel_cross_entropy(preds.view(), targets.view()).unwrap();
        assert!(loss >= 0.0);
        assert!(loss <= 2.0 * (1.0f64 - 1e-12).ln().abs());
    }

    #[test]
    fn fixed_batch_matches_scalar_recomputation() {
        let preds = array![[0.9, 0.2], [0.4, 0.7]];
        let targets = array![[1.0, 0.0], [0.0, 1.0]];
        let loss = multilabel_cross_entropy(preds.view(), targets.view()).unwrap();
        // -(ln 0.9 + ln 0.8 + ln 0.6 + ln 0.7) / 4, recomputed term by term.
        let expected = -(0.9f64.ln() + 0.8f64.ln() + 0.6f64.ln() + 0.7f64.ln()) / 4.0;
        assert!((loss - expected).abs() < 1e-12, "loss {loss} vs {expected}");
        assert!((loss - 0.299_001_4).abs() < 1e-6);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let preds = array![[0.5, 0.5]];
        let targets = array![[1.0]];
        assert!(multilabel_cross_entropy(preds.view(), targets.view()).is_err());
    }
}
