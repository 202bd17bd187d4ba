use super::{FeatureVector, LayerSelection, TransferError};
use crate::dataset::EncodedInstance;
use crate::pretrain::PretrainedModel;
use crate::rnn::stack_forward;
use ndarray::Array1;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Reads the frozen network's last-step hidden states for one instance.
///
/// Always runs in evaluation mode — dropout never touches extracted
/// features. The instance must carry exactly one label (the target task's).
pub fn extract_features(
    model: &PretrainedModel,
    instance: &EncodedInstance,
    selection: LayerSelection,
) -> Result<FeatureVector, TransferError> {
    if instance.labels.len() != 1 {
        return Err(TransferError::SingleLabelRequired {
            episode_id: instance.episode_id.clone(),
            got: instance.labels.len(),
        });
    }
    let trace = stack_forward(&instance.values.view(), &model.stack, None)?;
    Ok(FeatureVector {
        episode_id: instance.episode_id.clone(),
        label: instance.labels[0],
        values: trace.last_hidden(selection),
    })
}

/// Writes `episode_id,label,f0,...,f{m-1}` rows. Floats go out in Rust's
/// shortest round-trip rendering, so reading the file back is lossless.
pub fn write_features_csv(path: &Path, features: &[FeatureVector]) -> Result<(), TransferError> {
    let width = features.first().map_or(0, |f| f.values.len());
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "episode_id,label")?;
    for j in 0..width {
        write!(out, ",f{j}")?;
    }
    writeln!(out)?;
    for f in features {
        if f.values.len() != width {
            return Err(TransferError::LengthMismatch {
                expected: width,
                got: f.values.len(),
            });
        }
        write!(out, "{},{}", f.episode_id, f.label)?;
        for v in f.values.iter() {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_features_csv(path: &Path) -> Result<Vec<FeatureVector>, TransferError> {
    let display = path.display().to_string();
    let parse_err = |line: usize, message: String| TransferError::ParseCsv {
        path: display.clone(),
        line,
        message,
    };
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "file is empty".into()))?;
    let header = header?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < 2 || columns[0] != "episode_id" || columns[1] != "label" {
        return Err(parse_err(1, "header must start with episode_id,label".into()));
    }
    let width = columns.len() - 2;
    for (j, name) in columns[2..].iter().enumerate() {
        if *name != format!("f{j}") {
            return Err(parse_err(1, format!("expected column f{j}, found {name}")));
        }
    }

    let mut features = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width + 2 {
            return Err(parse_err(
                lineno,
                format!("expected {} fields, found {}", width + 2, fields.len()),
            ));
        }
        let label: u8 = fields[1]
            .parse()
            .map_err(|e| parse_err(lineno, format!("bad label: {e}")))?;
        if label > 1 {
            return Err(parse_err(lineno, format!("label must be 0 or 1, got {label}")));
        }
        let mut values = Vec::with_capacity(width);
        for raw in &fields[2..] {
            let v: f64 = raw
                .parse()
                .map_err(|e| parse_err(lineno, format!("bad number {raw:?}: {e}")))?;
            if !v.is_finite() {
                return Err(parse_err(lineno, format!("non-finite feature {raw:?}")));
            }
            values.push(v);
        }
        features.push(FeatureVector {
            episode_id: fields[0].to_string(),
            label,
            values: Array1::from_vec(values),
        });
    }
    Ok(features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pretrain::{EpochStats, PretrainedModel};
    use crate::rnn::init_params;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(input: usize, hidden: usize, depth: usize, seed: u64) -> PretrainedModel {
        let (stack, head) = init_params(input, hidden, depth, 1, seed).unwrap();
        PretrainedModel {
            stack,
            head,
            task_names: vec!["target".into()],
            history: vec![EpochStats {
                epoch: 1,
                train_loss: 0.0,
                val_loss: 0.0,
            }],
            best_epoch: 1,
            best_val_loss: 0.0,
        }
    }

    fn instance(rows: usize, cols: usize, seed: u64) -> EncodedInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EncodedInstance {
            episode_id: format!("ep{seed}"),
            values: Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0)),
            labels: vec![1],
        }
    }

    #[test]
    fn top_features_are_the_tail_of_all_features() {
        let m = model(4, 6, 2, 3);
        let inst = instance(5, 4, 1);
        let top = extract_features(&m, &inst, LayerSelection::Top).unwrap();
        let all = extract_features(&m, &inst, LayerSelection::All).unwrap();
        assert_eq!(top.values.len(), 6);
        assert_eq!(all.values.len(), 12);
        assert_eq!(all.values.slice(ndarray::s![6..]).to_vec(), top.values.to_vec());
    }

    #[test]
    fn zero_model_gives_zero_features() {
        let mut m = model(3, 4, 2, 0);
        for layer in &mut m.stack.layers {
            for mat in [
                &mut layer.w_reset,
                &mut layer.w_update,
                &mut layer.w_cand,
                &mut layer.u_reset,
                &mut layer.u_update,
                &mut layer.u_cand,
            ] {
                mat.fill(0.0);
            }
        }
        let inst = instance(4, 3, 2);
        let f = extract_features(&m, &inst, LayerSelection::All).unwrap();
        assert!(f.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn multi_label_instances_are_rejected() {
        let m = model(3, 4, 1, 0);
        let mut inst = instance(4, 3, 2);
        inst.labels = vec![1, 0];
        assert!(matches!(
            extract_features(&m, &inst, LayerSelection::Top),
            Err(TransferError::SingleLabelRequired { .. })
        ));
    }

    #[test]
    fn feature_csv_round_trips_losslessly() {
        let m = model(4, 5, 2, 9);
        let features: Vec<FeatureVector> = (0..6)
            .map(|i| extract_features(&m, &instance(3 + i, 4, i as u64), LayerSelection::All).unwrap())
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        write_features_csv(&path, &features).unwrap();
        let back = read_features_csv(&path).unwrap();
        assert_eq!(features, back);
    }

    #[test]
    fn corrupt_csv_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        std::fs::write(&path, "episode_id,label,f0\nep0,1,0.5\nep1,7,0.5\n").unwrap();
        match read_features_csv(&path).unwrap_err() {
            TransferError::ParseCsv { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
