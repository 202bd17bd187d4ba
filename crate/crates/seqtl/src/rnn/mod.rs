//! Multi-layer GRU: forward pass, exact backpropagation through time,
//! initialization, and model files.
//!
//! Conventions, fixed once so serialized models mean one thing:
//! reset gate `r = sigmoid(W_r x + U_r h_prev + b_r)`, update gate
//! `u = sigmoid(W_u x + U_u h_prev + b_u)`, candidate
//! `c = tanh(W_c x + U_c (r * h_prev) + b_c)`, and
//! `h = (1 - u) * h_prev + u * c`. The reset gate acts inside the
//! candidate's recurrent term. Dropout (training only, inverted scaling)
//! applies to a layer's output where it feeds the next layer and to the top
//! layer's last state where it feeds the classification head — never to the
//! step-to-step recurrent connections. Everything runs in `f64`.

mod backward;
mod forward;
mod init;
mod serialize;

pub use backward::backward_bptt;
pub(crate) use backward::instance_loss;
pub use forward::{
    forward, gru_cell_forward, head_forward, head_logits, stack_forward, CellGates, DropoutMasks,
    ForwardTrace, LayerTrace, StackTrace,
};
pub use init::init_params;
pub use serialize::{deserialize_model, serialize_model, ModelMetadata, FORMAT_VERSION};

use ndarray::{Array1, Array2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("unsupported model format: {0}")]
    UnsupportedFormat(String),
    #[error("model payload inconsistent: {0}")]
    Payload(String),
    #[error("model file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Numerically stable logistic function.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Weights of one recurrent layer. Input matrices are `h x d_in`, recurrent
/// matrices `h x h`, biases length `h`.
#[derive(Clone, Debug, PartialEq)]
pub struct GruLayerParams {
    pub w_reset: Array2<f64>,
    pub w_update: Array2<f64>,
    pub w_cand: Array2<f64>,
    pub u_reset: Array2<f64>,
    pub u_update: Array2<f64>,
    pub u_cand: Array2<f64>,
    pub b_reset: Array1<f64>,
    pub b_update: Array1<f64>,
    pub b_cand: Array1<f64>,
}

impl GruLayerParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        GruLayerParams {
            w_reset: Array2::zeros((hidden_size, input_size)),
            w_update: Array2::zeros((hidden_size, input_size)),
            w_cand: Array2::zeros((hidden_size, input_size)),
            u_reset: Array2::zeros((hidden_size, hidden_size)),
            u_update: Array2::zeros((hidden_size, hidden_size)),
            u_cand: Array2::zeros((hidden_size, hidden_size)),
            b_reset: Array1::zeros(hidden_size),
            b_update: Array1::zeros(hidden_size),
            b_cand: Array1::zeros(hidden_size),
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_reset.ncols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_reset.nrows()
    }

    pub fn param_count(&self) -> usize {
        3 * self.hidden_size() * (self.input_size() + self.hidden_size() + 1)
    }

    fn validate(&self, expected_input: usize, hidden: usize) -> Result<(), ModelError> {
        let shapes = [
            (self.w_reset.dim(), (hidden, expected_input), "w_reset"),
            (self.w_update.dim(), (hidden, expected_input), "w_update"),
            (self.w_cand.dim(), (hidden, expected_input), "w_cand"),
            (self.u_reset.dim(), (hidden, hidden), "u_reset"),
            (self.u_update.dim(), (hidden, hidden), "u_update"),
            (self.u_cand.dim(), (hidden, hidden), "u_cand"),
        ];
        for (got, want, name) in shapes {
            if got != want {
                return Err(ModelError::Dimension(format!(
                    "{name} is {got:?}, expected {want:?}"
                )));
            }
        }
        for (b, name) in [
            (&self.b_reset, "b_reset"),
            (&self.b_update, "b_update"),
            (&self.b_cand, "b_cand"),
        ] {
            if b.len() != hidden {
                return Err(ModelError::Dimension(format!(
                    "{name} has length {}, expected {hidden}",
                    b.len()
                )));
            }
        }
        Ok(())
    }
}

/// The recurrent feature extractor: `depth()` stacked GRU layers sharing one
/// hidden size. Layer 1 consumes the encoded input row, each later layer
/// consumes the previous layer's hidden output.
#[derive(Clone, Debug, PartialEq)]
pub struct GruStack {
    pub layers: Vec<GruLayerParams>,
}

impl GruStack {
    pub fn new(layers: Vec<GruLayerParams>) -> Result<Self, ModelError> {
        if layers.is_empty() {
            return Err(ModelError::Dimension("stack needs at least one layer".into()));
        }
        let hidden = layers[0].hidden_size();
        let mut expected_input = layers[0].input_size();
        for layer in &layers {
            layer.validate(expected_input, hidden)?;
            expected_input = hidden;
        }
        Ok(GruStack { layers })
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].input_size()
    }

    pub fn hidden_size(&self) -> usize {
        self.layers[0].hidden_size()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Length of the concatenated all-layer feature vector, `h * L`.
    pub fn feature_size(&self) -> usize {
        self.hidden_size() * self.depth()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            for m in [
                &mut layer.w_reset,
                &mut layer.w_update,
                &mut layer.w_cand,
                &mut layer.u_reset,
                &mut layer.u_update,
                &mut layer.u_cand,
            ] {
                out.push(m.as_slice_mut().expect("standard layout"));
            }
            for b in [&mut layer.b_reset, &mut layer.b_update, &mut layer.b_cand] {
                out.push(b.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }
}

/// Classification layer on top of the last hidden state of the top layer:
/// weights `K x h`, bias length `K`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl HeadParams {
    pub fn zeros(num_tasks: usize, hidden_size: usize) -> Self {
        HeadParams {
            weights: Array2::zeros((num_tasks, hidden_size)),
            bias: Array1::zeros(num_tasks),
        }
    }

    pub fn num_tasks(&self) -> usize {
        self.weights.nrows()
    }

    pub fn hidden_size(&self) -> usize {
        self.weights.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.num_tasks() * (self.hidden_size() + 1)
    }

    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.weights.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
        ]
    }
}

/// Total trainable parameter count of stack plus head.
pub fn param_count(stack: &GruStack, head: &HeadParams) -> usize {
    stack.param_count() + head.param_count()
}

/// Gradients of one layer, same shapes as [`GruLayerParams`].
#[derive(Clone, Debug)]
pub struct LayerGrads {
    pub w_reset: Array2<f64>,
    pub w_update: Array2<f64>,
    pub w_cand: Array2<f64>,
    pub u_reset: Array2<f64>,
    pub u_update: Array2<f64>,
    pub u_cand: Array2<f64>,
    pub b_reset: Array1<f64>,
    pub b_update: Array1<f64>,
    pub b_cand: Array1<f64>,
}

/// One gradient tensor per parameter tensor, in the stack-then-head order
/// used by the optimizer.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
    pub head_weights: Array2<f64>,
    pub head_bias: Array1<f64>,
}

impl Gradients {
    pub fn zeros_like(stack: &GruStack, head: &HeadParams) -> Self {
        Gradients {
            layers: stack
                .layers
                .iter()
                .map(|l| LayerGrads {
                    w_reset: Array2::zeros(l.w_reset.dim()),
                    w_update: Array2::zeros(l.w_update.dim()),
                    w_cand: Array2::zeros(l.w_cand.dim()),
                    u_reset: Array2::zeros(l.u_reset.dim()),
                    u_update: Array2::zeros(l.u_update.dim()),
                    u_cand: Array2::zeros(l.u_cand.dim()),
                    b_reset: Array1::zeros(l.b_reset.len()),
                    b_update: Array1::zeros(l.b_update.len()),
                    b_cand: Array1::zeros(l.b_cand.len()),
                })
                .collect(),
            head_weights: Array2::zeros(head.weights.dim()),
            head_bias: Array1::zeros(head.bias.len()),
        }
    }

    pub(crate) fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            for m in [
                &layer.w_reset,
                &layer.w_update,
                &layer.w_cand,
                &layer.u_reset,
                &layer.u_update,
                &layer.u_cand,
            ] {
                out.push(m.as_slice().expect("standard layout"));
            }
            for b in [&layer.b_reset, &layer.b_update, &layer.b_cand] {
                out.push(b.as_slice().expect("standard layout"));
            }
        }
        out.push(self.head_weights.as_slice().expect("standard layout"));
        out.push(self.head_bias.as_slice().expect("standard layout"));
        out
    }

    pub(crate) fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            for m in [
                &mut layer.w_reset,
                &mut layer.w_update,
                &mut layer.w_cand,
                &mut layer.u_reset,
                &mut layer.u_update,
                &mut layer.u_cand,
            ] {
                out.push(m.as_slice_mut().expect("standard layout"));
            }
            for b in [&mut layer.b_reset, &mut layer.b_update, &mut layer.b_cand] {
                out.push(b.as_slice_mut().expect("standard layout"));
            }
        }
        out.push(self.head_weights.as_slice_mut().expect("standard layout"));
        out.push(self.head_bias.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        let mut mine = self.slices_mut();
        let theirs = other.slices();
        for (a, b) in mine.iter_mut().zip(theirs) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            for x in s.iter_mut() {
                *x *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }
}

/// Parameter slices of stack and head in the same order as
/// [`Gradients::slices`], for optimizers that walk parameter/gradient pairs.
pub(crate) fn model_param_slices_mut<'a>(
    stack: &'a mut GruStack,
    head: &'a mut HeadParams,
) -> Vec<&'a mut [f64]> {
    let mut out = stack.param_slices_mut();
    out.extend(head.param_slices_mut());
    out
}
