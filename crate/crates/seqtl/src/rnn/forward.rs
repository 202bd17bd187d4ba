use super::{sigmoid, GruLayerParams, GruStack, HeadParams, ModelError};
use crate::transfer::LayerSelection;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

/// Gate activations of a single cell step.
#[derive(Clone, Debug)]
pub struct CellGates {
    pub reset: Array1<f64>,
    pub update: Array1<f64>,
    pub cand: Array1<f64>,
}

/// One GRU step.
///
/// With all-zero parameters the gates sit at 0.5 and the candidate at 0, so
/// the new state is half the previous one.
pub fn gru_cell_forward(
    x: ArrayView1<f64>,
    h_prev: ArrayView1<f64>,
    p: &GruLayerParams,
) -> Result<(Array1<f64>, CellGates), ModelError> {
    if x.len() != p.input_size() {
        return Err(ModelError::Dimension(format!(
            "cell input has length {}, expected {}",
            x.len(),
            p.input_size()
        )));
    }
    if h_prev.len() != p.hidden_size() {
        return Err(ModelError::Dimension(format!(
            "previous state has length {}, expected {}",
            h_prev.len(),
            p.hidden_size()
        )));
    }
    let reset =
        (p.w_reset.dot(&x) + p.u_reset.dot(&h_prev) + &p.b_reset).mapv(sigmoid);
    let update =
        (p.w_update.dot(&x) + p.u_update.dot(&h_prev) + &p.b_update).mapv(sigmoid);
    let gated_prev = &reset * &h_prev;
    let cand =
        (p.w_cand.dot(&x) + p.u_cand.dot(&gated_prev) + &p.b_cand).mapv(f64::tanh);
    let h = (1.0 - &update) * &h_prev + &update * &cand;
    Ok((
        h,
        CellGates {
            reset,
            update,
            cand,
        },
    ))
}

/// Inverted-scaling dropout masks for one instance: entries are 0 with
/// probability `rate`, otherwise `1 / (1 - rate)`. One mask matrix per
/// layer boundary (applied where layer `l` feeds layer `l + 1`) plus one
/// vector for the top layer's last state feeding the head.
#[derive(Clone, Debug)]
pub struct DropoutMasks {
    pub between: Vec<Array2<f64>>,
    pub head: Array1<f64>,
    pub rate: f64,
}

impl DropoutMasks {
    pub fn sample<R: Rng>(
        steps: usize,
        hidden_size: usize,
        depth: usize,
        rate: f64,
        rng: &mut R,
    ) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        let keep = 1.0 - rate;
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len)
                .map(|_| {
                    if rng.random::<f64>() < rate {
                        0.0
                    } else {
                        1.0 / keep
                    }
                })
                .collect()
        };
        let between = (0..depth.saturating_sub(1))
            .map(|_| {
                Array2::from_shape_vec((steps, hidden_size), draw(steps * hidden_size))
                    .expect("shape matches")
            })
            .collect();
        let head = Array1::from_vec(draw(hidden_size));
        DropoutMasks {
            between,
            head,
            rate,
        }
    }

    fn check(&self, steps: usize, hidden_size: usize, depth: usize) -> Result<(), ModelError> {
        if self.between.len() != depth.saturating_sub(1)
            || self.head.len() != hidden_size
            || self
                .between
                .iter()
                .any(|m| m.dim() != (steps, hidden_size))
        {
            return Err(ModelError::Dimension(
                "dropout masks do not match the sequence layout".into(),
            ));
        }
        Ok(())
    }
}

/// Everything the backward pass needs from one layer: the inputs as fed
/// (post-dropout), the three gate activations, and the hidden states.
/// All matrices are `valid_length x width`, row `t` = step `t + 1`.
#[derive(Clone, Debug)]
pub struct LayerTrace {
    pub inputs: Array2<f64>,
    pub reset: Array2<f64>,
    pub update: Array2<f64>,
    pub cand: Array2<f64>,
    pub hidden: Array2<f64>,
}

/// Cached activations of a full stack pass over one instance.
#[derive(Clone, Debug)]
pub struct StackTrace {
    pub layers: Vec<LayerTrace>,
    pub masks: Option<DropoutMasks>,
    /// Top layer's last hidden state as fed to the head (masked when
    /// dropout is active).
    pub head_input: Array1<f64>,
}

impl StackTrace {
    pub fn steps(&self) -> usize {
        self.layers[0].hidden.nrows()
    }

    /// Last-step hidden states, read at `t = valid_length`: the top layer
    /// alone or all layers concatenated in layer order. Raw states — no
    /// dropout is ever applied to extracted features.
    pub fn last_hidden(&self, selection: LayerSelection) -> Array1<f64> {
        let last = self.steps() - 1;
        match selection {
            LayerSelection::Top => self.layers.last().unwrap().hidden.row(last).to_owned(),
            LayerSelection::All => {
                let mut out = Vec::new();
                for layer in &self.layers {
                    out.extend(layer.hidden.row(last).iter().copied());
                }
                Array1::from_vec(out)
            }
        }
    }
}

/// Runs the stack over one encoded instance (rows = time steps).
///
/// Pass `None` for evaluation mode; pass sampled masks to train with
/// dropout. The input-to-hidden projections of a whole sequence are batched
/// into one matrix product per gate; only the recurrent terms step through
/// time.
pub fn stack_forward(
    values: &ArrayView2<f64>,
    stack: &GruStack,
    masks: Option<DropoutMasks>,
) -> Result<StackTrace, ModelError> {
    let steps = values.nrows();
    if steps == 0 {
        return Err(ModelError::Dimension("instance has no time steps".into()));
    }
    if values.ncols() != stack.input_size() {
        return Err(ModelError::Dimension(format!(
            "instance width {} does not match model input size {}",
            values.ncols(),
            stack.input_size()
        )));
    }
    let hidden_size = stack.hidden_size();
    if let Some(m) = &masks {
        m.check(steps, hidden_size, stack.depth())?;
    }

    let mut layers = Vec::with_capacity(stack.depth());
    let mut inputs: Array2<f64> = values.to_owned();
    for (l, p) in stack.layers.iter().enumerate() {
        // T x h projections of the whole sequence, one GEMM per gate.
        let proj_reset = inputs.dot(&p.w_reset.t());
        let proj_update = inputs.dot(&p.w_update.t());
        let proj_cand = inputs.dot(&p.w_cand.t());

        let mut reset = Array2::zeros((steps, hidden_size));
        let mut update = Array2::zeros((steps, hidden_size));
        let mut cand = Array2::zeros((steps, hidden_size));
        let mut hidden = Array2::zeros((steps, hidden_size));
        let mut h_prev = Array1::<f64>::zeros(hidden_size);

        for t in 0..steps {
            let r = (&proj_reset.row(t) + &p.u_reset.dot(&h_prev) + &p.b_reset).mapv(sigmoid);
            let u = (&proj_update.row(t) + &p.u_update.dot(&h_prev) + &p.b_update).mapv(sigmoid);
            let gated_prev = &r * &h_prev;
            let c = (&proj_cand.row(t) + &p.u_cand.dot(&gated_prev) + &p.b_cand).mapv(f64::tanh);
            let h = (1.0 - &u) * &h_prev + &u * &c;
            reset.row_mut(t).assign(&r);
            update.row_mut(t).assign(&u);
            cand.row_mut(t).assign(&c);
            hidden.row_mut(t).assign(&h);
            h_prev = h;
        }

        let next_inputs = if l + 1 < stack.depth() {
            match &masks {
                Some(m) => &hidden * &m.between[l],
                None => hidden.clone(),
            }
        } else {
            Array2::zeros((0, 0))
        };
        layers.push(LayerTrace {
            inputs,
            reset,
            update,
            cand,
            hidden,
        });
        inputs = next_inputs;
    }

    let top_last = layers.last().unwrap().hidden.index_axis(Axis(0), steps - 1);
    let head_input = match &masks {
        Some(m) => &top_last * &m.head,
        None => top_last.to_owned(),
    };

    Ok(StackTrace {
        layers,
        masks,
        head_input,
    })
}

/// Pre-sigmoid task scores of the classification layer.
pub fn head_logits(z: ArrayView1<f64>, head: &HeadParams) -> Result<Array1<f64>, ModelError> {
    if z.len() != head.hidden_size() {
        return Err(ModelError::Dimension(format!(
            "head input has length {}, expected {}",
            z.len(),
            head.hidden_size()
        )));
    }
    Ok(head.weights.dot(&z) + &head.bias)
}

/// Per-task probabilities `sigmoid(W z + b)`; every entry lies in (0, 1)
/// up to floating-point saturation.
pub fn head_forward(z: ArrayView1<f64>, head: &HeadParams) -> Result<Array1<f64>, ModelError> {
    Ok(head_logits(z, head)?.mapv(sigmoid))
}

/// Full cached pass: stack then head.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub stack: StackTrace,
    pub logits: Array1<f64>,
    pub y_hat: Array1<f64>,
}

pub fn forward(
    values: &ArrayView2<f64>,
    stack: &GruStack,
    head: &HeadParams,
    masks: Option<DropoutMasks>,
) -> Result<ForwardTrace, ModelError> {
    let trace = stack_forward(values, stack, masks)?;
    let logits = head_logits(trace.head_input.view(), head)?;
    let y_hat = logits.mapv(sigmoid);
    Ok(ForwardTrace {
        stack: trace,
        logits,
        y_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rnn::init_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_values(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_parameters_halve_the_previous_state() {
        let p = GruLayerParams::zeros(3, 4);
        let x = Array1::from_vec(vec![0.3, -0.7, 1.1]);
        let h_prev = Array1::from_vec(vec![1.0, -2.0, 0.5, 4.0]);
        let (h, gates) = gru_cell_forward(x.view(), h_prev.view(), &p).unwrap();
        for i in 0..4 {
            assert!((h[i] - 0.5 * h_prev[i]).abs() < 1e-15);
            assert_eq!(gates.reset[i], 0.5);
            assert_eq!(gates.update[i], 0.5);
            assert_eq!(gates.cand[i], 0.0);
        }

        let zero_prev = Array1::zeros(4);
        let (h0, _) = gru_cell_forward(x.view(), zero_prev.view(), &p).unwrap();
        assert!(h0.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn random_cell_matches_scalar_recomputation() {
        let (stack, _) = init_params(3, 2, 1, 1, 42).unwrap();
        let p = &stack.layers[0];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Array1::from_shape_fn(3, |_| rng.random_range(-2.0..2.0));
        let h_prev = Array1::from_shape_fn(2, |_| rng.random_range(-1.0..1.0));
        let (h, gates) = gru_cell_forward(x.view(), h_prev.view(), p).unwrap();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        for i in 0..2 {
            let mut ar = p.b_reset[i];
            let mut au = p.b_update[i];
            for j in 0..3 {
                ar += p.w_reset[(i, j)] * x[j];
                au += p.w_update[(i, j)] * x[j];
            }
            for j in 0..2 {
                ar += p.u_reset[(i, j)] * h_prev[j];
                au += p.u_update[(i, j)] * h_prev[j];
            }
            let r = sig(ar);
            let u = sig(au);
            assert!((gates.reset[i] - r).abs() < 1e-12);
            assert!((gates.update[i] - u).abs() < 1e-12);

            let mut ac = p.b_cand[i];
            for j in 0..3 {
                ac += p.w_cand[(i, j)] * x[j];
            }
            for j in 0..2 {
                ac += p.u_cand[(i, j)] * (gates.reset[j] * h_prev[j]);
            }
            let c = ac.tanh();
            assert!((gates.cand[i] - c).abs() < 1e-12);
            let expect = (1.0 - u) * h_prev[i] + u * c;
            assert!((h[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn all_layer_features_have_length_h_times_l() {
        let (stack, _) = init_params(5, 300, 2, 4, 0).unwrap();
        let values = random_values(3, 5, 1);
        let trace = stack_forward(&values.view(), &stack, None).unwrap();
        assert_eq!(trace.last_hidden(LayerSelection::All).len(), 600);
        assert_eq!(trace.last_hidden(LayerSelection::Top).len(), 300);
    }

    #[test]
    fn zero_stack_produces_zero_states_everywhere() {
        let stack = GruStack::new(vec![
            GruLayerParams::zeros(4, 3),
            GruLayerParams::zeros(3, 3),
        ])
        .unwrap();
        let values = random_values(6, 4, 2);
        let trace = stack_forward(&values.view(), &stack, None).unwrap();
        for layer in &trace.layers {
            assert!(layer.hidden.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn evaluation_forward_is_pure() {
        let (stack, head) = init_params(4, 3, 2, 2, 9).unwrap();
        let a = random_values(5, 4, 3);
        let b = random_values(7, 4, 4);
        let t1 = forward(&a.view(), &stack, &head, None).unwrap();
        let _ = forward(&b.view(), &stack, &head, None).unwrap();
        let t2 = forward(&a.view(), &stack, &head, None).unwrap();
        assert_eq!(t1.y_hat, t2.y_hat);
        assert_eq!(
            t1.stack.last_hidden(LayerSelection::All),
            t2.stack.last_hidden(LayerSelection::All)
        );
    }

    #[test]
    fn zero_head_outputs_one_half_and_saturates_with_large_bias() {
        let head = HeadParams::zeros(3, 4);
        let z = Array1::from_vec(vec![0.2, -0.4, 1.0, 0.0]);
        let y = head_forward(z.view(), &head).unwrap();
        assert!(y.iter().all(|v| *v == 0.5));

        let mut head = HeadParams::zeros(1, 4);
        head.bias[0] = 50.0;
        let y = head_forward(z.view(), &head).unwrap();
        assert!(y[0] > 1.0 - 1e-9);
    }

    #[test]
    fn random_head_matches_scalar_recomputation() {
        let (_, head) = init_params(4, 5, 1, 3, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let z = Array1::from_shape_fn(5, |_| rng.random_range(-1.5..1.5));
        let y = head_forward(z.view(), &head).unwrap();
        for k in 0..3 {
            let mut logit = head.bias[k];
            for j in 0..5 {
                logit += head.weights[(k, j)] * z[j];
            }
            let expect = 1.0 / (1.0 + (-logit).exp());
            assert!((y[k] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let (stack, _) = init_params(4, 3, 2, 2, 0).unwrap();
        let values = random_values(5, 6, 0);
        assert!(stack_forward(&values.view(), &stack, None).is_err());
    }
}
