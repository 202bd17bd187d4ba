use super::{ForwardTrace, Gradients, GruStack, HeadParams, ModelError};
use ndarray::{Array1, Array2, Axis};

const PROB_CLIP: f64 = 1e-12;

/// Per-instance multi-label cross-entropy: the mean over tasks of
/// `-(y ln p + (1 - y) ln(1 - p))` with probabilities clipped away from 0
/// and 1 before the logs.
pub(crate) fn instance_loss(y_hat: &Array1<f64>, labels: &[u8]) -> f64 {
    let mut total = 0.0;
    for (p, &y) in y_hat.iter().zip(labels) {
        let p = p.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
        total -= if y == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    total / labels.len() as f64
}

/// Exact gradients of the per-instance loss with respect to every parameter
/// of `stack` and `head`, by backpropagation through time over the trace's
/// recorded steps. Returns the loss value alongside.
///
/// The trace must come from a forward pass over the same parameters; only
/// shape consistency can be checked here.
pub fn backward_bptt(
    trace: &ForwardTrace,
    labels: &[u8],
    stack: &GruStack,
    head: &HeadParams,
) -> Result<(Gradients, f64), ModelError> {
    let num_tasks = head.num_tasks();
    if labels.len() != num_tasks || trace.y_hat.len() != num_tasks {
        return Err(ModelError::Dimension(format!(
            "label vector has length {}, expected {num_tasks}",
            labels.len()
        )));
    }
    if trace.stack.layers.len() != stack.depth() {
        return Err(ModelError::Dimension(
            "trace depth does not match the stack".into(),
        ));
    }
    let steps = trace.stack.steps();
    let hidden_size = stack.hidden_size();

    let loss = instance_loss(&trace.y_hat, labels);
    let mut grads = Gradients::zeros_like(stack, head);

    // d loss / d logit_k = (p_k - y_k) / K.
    let mut d_logits = trace.y_hat.clone();
    for (d, &y) in d_logits.iter_mut().zip(labels) {
        *d = (*d - f64::from(y)) / num_tasks as f64;
    }

    for (k, &d) in d_logits.iter().enumerate() {
        grads
            .head_weights
            .row_mut(k)
            .scaled_add(d, &trace.stack.head_input);
    }
    grads.head_bias.assign(&d_logits);

    let mut d_top = head.weights.t().dot(&d_logits);
    if let Some(masks) = &trace.stack.masks {
        d_top = &d_top * &masks.head;
    }

    // Gradient flowing into each layer's hidden output from above.
    let mut d_out: Vec<Array2<f64>> = (0..stack.depth())
        .map(|_| Array2::zeros((steps, hidden_size)))
        .collect();
    d_out[stack.depth() - 1].row_mut(steps - 1).assign(&d_top);

    for l in (0..stack.depth()).rev() {
        let p = &stack.layers[l];
        let lt = &trace.stack.layers[l];

        let mut da_reset = Array2::<f64>::zeros((steps, hidden_size));
        let mut da_update = Array2::<f64>::zeros((steps, hidden_size));
        let mut da_cand = Array2::<f64>::zeros((steps, hidden_size));

        let zeros = Array1::<f64>::zeros(hidden_size);
        let mut dh_rec = Array1::<f64>::zeros(hidden_size);
        for t in (0..steps).rev() {
            let dh = &d_out[l].row(t) + &dh_rec;
            let h_prev = if t > 0 {
                lt.hidden.row(t - 1)
            } else {
                zeros.view()
            };
            let r = lt.reset.row(t);
            let u = lt.update.row(t);
            let c = lt.cand.row(t);

            let du_gate = &dh * &(&c - &h_prev);
            let da_u = &du_gate * &u * &(1.0 - &u);
            let dc = &dh * &u;
            let da_c = &dc * &(1.0 - &c * &c);

            let mut dh_prev = &dh * &(1.0 - &u);
            let through_cand = p.u_cand.t().dot(&da_c);
            let dr = &through_cand * &h_prev;
            let da_r = &dr * &r * &(1.0 - &r);
            dh_prev = dh_prev + &through_cand * &r;
            dh_prev = dh_prev + p.u_reset.t().dot(&da_r) + p.u_update.t().dot(&da_u);

            da_reset.row_mut(t).assign(&da_r);
            da_update.row_mut(t).assign(&da_u);
            da_cand.row_mut(t).assign(&da_c);
            dh_rec = dh_prev;
        }

        // Batched parameter gradients over the whole sequence.
        let mut h_prev_mat = Array2::<f64>::zeros((steps, hidden_size));
        for t in 1..steps {
            let prev = lt.hidden.row(t - 1).to_owned();
            h_prev_mat.row_mut(t).assign(&prev);
        }
        let gated_prev = &lt.reset * &h_prev_mat;

        let g = &mut grads.layers[l];
        g.w_reset += &da_reset.t().dot(&lt.inputs);
        g.w_update += &da_update.t().dot(&lt.inputs);
        g.w_cand += &da_cand.t().dot(&lt.inputs);
        g.u_reset += &da_reset.t().dot(&h_prev_mat);
        g.u_update += &da_update.t().dot(&h_prev_mat);
        g.u_cand += &da_cand.t().dot(&gated_prev);
        g.b_reset += &da_reset.sum_axis(Axis(0));
        g.b_update += &da_update.sum_axis(Axis(0));
        g.b_cand += &da_cand.sum_axis(Axis(0));

        if l > 0 {
            let mut dx = da_reset.dot(&p.w_reset);
            dx = dx + da_update.dot(&p.w_update);
            dx = dx + da_cand.dot(&p.w_cand);
            if let Some(masks) = &trace.stack.masks {
                dx = &dx * &masks.between[l - 1];
            }
            d_out[l - 1] += &dx;
        }
    }

    Ok((grads, loss))
}
