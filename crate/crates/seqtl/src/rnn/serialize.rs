use super::{GruLayerParams, GruStack, HeadParams, ModelError};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: &str = "1";

/// Everything stored in a model file besides the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub schema_hash: String,
    pub train_config: serde_json::Value,
    pub seed: u64,
    pub task_names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct TensorJson {
    shape: Vec<usize>,
    /// Row-major entries, written at full precision.
    data: Vec<f64>,
}

impl TensorJson {
    fn from_matrix(m: &Array2<f64>) -> Self {
        TensorJson {
            shape: vec![m.nrows(), m.ncols()],
            data: m.iter().copied().collect(),
        }
    }

    fn from_vector(v: &Array1<f64>) -> Self {
        TensorJson {
            shape: vec![v.len()],
            data: v.to_vec(),
        }
    }

    fn into_matrix(self, name: &str, rows: usize, cols: usize) -> Result<Array2<f64>, ModelError> {
        if self.shape != [rows, cols] {
            return Err(ModelError::Payload(format!(
                "{name}: declared shape {:?}, expected [{rows}, {cols}]",
                self.shape
            )));
        }
        if self.data.len() != rows * cols {
            return Err(ModelError::Payload(format!(
                "{name}: shape {:?} disagrees with {} data entries",
                self.shape,
                self.data.len()
            )));
        }
        Array2::from_shape_vec((rows, cols), self.data)
            .map_err(|e| ModelError::Payload(format!("{name}: {e}")))
    }

    fn into_vector(self, name: &str, len: usize) -> Result<Array1<f64>, ModelError> {
        if self.shape != [len] || self.data.len() != len {
            return Err(ModelError::Payload(format!(
                "{name}: declared shape {:?} with {} entries, expected [{len}]",
                self.shape,
                self.data.len()
            )));
        }
        Ok(Array1::from_vec(self.data))
    }
}

#[derive(Serialize, Deserialize)]
struct LayerJson {
    w_reset: TensorJson,
    w_update: TensorJson,
    w_cand: TensorJson,
    u_reset: TensorJson,
    u_update: TensorJson,
    u_cand: TensorJson,
    b_reset: TensorJson,
    b_update: TensorJson,
    b_cand: TensorJson,
}

#[derive(Serialize, Deserialize)]
struct HeadJson {
    weights: TensorJson,
    bias: TensorJson,
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    format_version: String,
    n: usize,
    h: usize,
    #[serde(rename = "L")]
    depth: usize,
    #[serde(rename = "K")]
    num_tasks: usize,
    layers: Vec<LayerJson>,
    head: HeadJson,
    schema_hash: String,
    train_config: serde_json::Value,
    seed: u64,
    task_names: Vec<String>,
}

/// Renders a model as versioned JSON with explicit shapes and row-major
/// number arrays. serde_json writes the shortest decimal that parses back
/// to the same `f64`, so the round trip is exact.
pub fn serialize_model(
    stack: &GruStack,
    head: &HeadParams,
    metadata: &ModelMetadata,
) -> Result<Vec<u8>, ModelError> {
    let file = ModelJson {
        format_version: FORMAT_VERSION.to_string(),
        n: stack.input_size(),
        h: stack.hidden_size(),
        depth: stack.depth(),
        num_tasks: head.num_tasks(),
        layers: stack
            .layers
            .iter()
            .map(|l| LayerJson {
                w_reset: TensorJson::from_matrix(&l.w_reset),
                w_update: TensorJson::from_matrix(&l.w_update),
                w_cand: TensorJson::from_matrix(&l.w_cand),
                u_reset: TensorJson::from_matrix(&l.u_reset),
                u_update: TensorJson::from_matrix(&l.u_update),
                u_cand: TensorJson::from_matrix(&l.u_cand),
                b_reset: TensorJson::from_vector(&l.b_reset),
                b_update: TensorJson::from_vector(&l.b_update),
                b_cand: TensorJson::from_vector(&l.b_cand),
            })
            .collect(),
        head: HeadJson {
            weights: TensorJson::from_matrix(&head.weights),
            bias: TensorJson::from_vector(&head.bias),
        },
        schema_hash: metadata.schema_hash.clone(),
        train_config: metadata.train_config.clone(),
        seed: metadata.seed,
        task_names: metadata.task_names.clone(),
    };
    Ok(serde_json::to_vec(&file)?)
}

pub fn deserialize_model(
    bytes: &[u8],
) -> Result<(GruStack, HeadParams, ModelMetadata), ModelError> {
    let value: serde_json::Value = serde_json::from_slice(bytes)?;
    match value.get("format_version") {
        None => {
            return Err(ModelError::UnsupportedFormat(
                "file has no format_version field".into(),
            ))
        }
        Some(v) if v != FORMAT_VERSION => {
            return Err(ModelError::UnsupportedFormat(format!(
                "format_version {v} (this build reads version {FORMAT_VERSION})"
            )))
        }
        _ => {}
    }
    let file: ModelJson = serde_json::from_value(value)?;
    if file.layers.len() != file.depth {
        return Err(ModelError::Payload(format!(
            "declared L = {} but found {} layers",
            file.depth,
            file.layers.len()
        )));
    }
    if file.task_names.len() != file.num_tasks {
        return Err(ModelError::Payload(format!(
            "declared K = {} but found {} task names",
            file.num_tasks,
            file.task_names.len()
        )));
    }

    let mut layers = Vec::with_capacity(file.depth);
    for (l, lj) in file.layers.into_iter().enumerate() {
        let d_in = if l == 0 { file.n } else { file.h };
        let name = |field: &str| format!("layers[{l}].{field}");
        layers.push(GruLayerParams {
            w_reset: lj.w_reset.into_matrix(&name("w_reset"), file.h, d_in)?,
            w_update: lj.w_update.into_matrix(&name("w_update"), file.h, d_in)?,
            w_cand: lj.w_cand.into_matrix(&name("w_cand"), file.h, d_in)?,
            u_reset: lj.u_reset.into_matrix(&name("u_reset"), file.h, file.h)?,
            u_update: lj.u_update.into_matrix(&name("u_update"), file.h, file.h)?,
            u_cand: lj.u_cand.into_matrix(&name("u_cand"), file.h, file.h)?,
            b_reset: lj.b_reset.into_vector(&name("b_reset"), file.h)?,
            b_update: lj.b_update.into_vector(&name("b_update"), file.h)?,
            b_cand: lj.b_cand.into_vector(&name("b_cand"), file.h)?,
        });
    }
    let stack = GruStack::new(layers)?;
    let head = HeadParams {
        weights: file.head.weights.into_matrix("head.weights", file.num_tasks, file.h)?,
        bias: file.head.bias.into_vector("head.bias", file.num_tasks)?,
    };
    let metadata = ModelMetadata {
        schema_hash: file.schema_hash,
        train_config: file.train_config,
        seed: file.seed,
        task_names: file.task_names,
    };
    Ok((stack, head, metadata))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rnn::{forward, init_params};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn metadata() -> ModelMetadata {
        ModelMetadata {
            schema_hash: "abc123".into(),
            train_config: serde_json::json!({"batch_size": 128}),
            seed: 7,
            task_names: vec!["a".into(), "b".into()],
        }
    }

    #[test]
    fn round_trip_preserves_predictions_bit_exactly() {
        let (stack, head) = init_params(5, 4, 2, 2, 41).unwrap();
        let bytes = serialize_model(&stack, &head, &metadata()).unwrap();
        let (stack2, head2, meta2) = deserialize_model(&bytes).unwrap();
        assert_eq!(meta2, metadata());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let values = Array2::from_shape_fn((6, 5), |_| rng.random_range(-2.0..2.0));
        let y1 = forward(&values.view(), &stack, &head, None).unwrap().y_hat;
        let y2 = forward(&values.view(), &stack2, &head2, None).unwrap().y_hat;
        assert_eq!(y1, y2);

        let bytes2 = serialize_model(&stack2, &head2, &metadata()).unwrap();
        assert_eq!(bytes, bytes2);
    }

    #[test]
    fn tampered_shape_is_rejected() {
        let (stack, head) = init_params(3, 2, 1, 1, 0).unwrap();
        let bytes = serialize_model(&stack, &head, &metadata()).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let tampered = text.replacen("\"shape\":[2,3]", "\"shape\":[3,2]", 1);
        let err = deserialize_model(tampered.as_bytes()).unwrap_err();
        assert!(matches!(err, ModelError::Payload(_)));
    }

    #[test]
    fn missing_version_is_an_unsupported_format() {
        let err = deserialize_model(br#"{"n": 3}"#).unwrap_err();
        assert!(matches!(err, ModelError::UnsupportedFormat(_)));
        let err = deserialize_model(br#"{"format_version": "99"}"#).unwrap_err();
        assert!(matches!(err, ModelError::UnsupportedFormat(_)));
    }
}
