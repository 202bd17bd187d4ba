use super::{TrainConfig, TrainError};
use crate::rnn::{model_param_slices_mut, Gradients, GruStack, HeadParams};

/// First and second moment estimates, one vector per parameter tensor in
/// the fixed stack-then-head enumeration order, plus the step counter.
#[derive(Clone, Debug)]
pub struct AdamState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(stack: &GruStack, head: &HeadParams) -> Self {
        let shapes: Vec<usize> = Gradients::zeros_like(stack, head)
            .slices()
            .iter()
            .map(|s| s.len())
            .collect();
        AdamState {
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update in place. Rejects non-finite gradients
/// before touching any parameter.
pub fn adam_step(
    stack: &mut GruStack,
    head: &mut HeadParams,
    grads: &Gradients,
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<(), TrainError> {
    if !grads.is_finite() {
        return Err(TrainError::NonFiniteGradient { epoch: 0 });
    }
    let grad_slices = grads.slices();
    let mut param_slices = model_param_slices_mut(stack, head);
    if grad_slices.len() != state.first.len()
        || grad_slices
            .iter()
            .zip(&state.first)
            .any(|(g, m)| g.len() != m.len())
    {
        return Err(TrainError::Shape(
            "optimizer state does not match the gradient layout".into(),
        ));
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);

    for ((params, grads), (m, v)) in param_slices
        .iter_mut()
        .zip(&grad_slices)
        .zip(state.first.iter_mut().zip(state.second.iter_mut()))
    {
        for i in 0..params.len() {
            let g = grads[i];
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            params[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
    Ok(())
}
