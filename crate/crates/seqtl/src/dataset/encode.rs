use super::{
    ChannelKind, ChannelSchema, ChannelValue, DatasetError, DatasetSplit, EncodedInstance,
    EpisodeRecord, RawSplit,
};
use ndarray::Array2;

/// Encodes a raw record into a `valid_length x n` matrix.
///
/// Real channels are copied, categorical channels become one-hot blocks.
/// Missing values are forward-filled from the last observation of the same
/// channel; before any observation the channel default applies (0 for real,
/// first category for categorical). Rows beyond `horizon` are dropped, so
/// `valid_length = min(#hours, horizon)`. `tasks` fixes the label order.
pub fn encode_record(
    record: &EpisodeRecord,
    schema: &ChannelSchema,
    horizon: usize,
    tasks: &[String],
) -> Result<EncodedInstance, DatasetError> {
    if record.hours.is_empty() {
        return Err(DatasetError::EmptyEpisode(record.episode_id.clone()));
    }
    let valid_length = record.hours.len().min(horizon);
    if valid_length == 0 {
        return Err(DatasetError::Validation(format!(
            "horizon must be at least 1, got {horizon}"
        )));
    }

    let offsets = schema.column_offsets();
    let mut values = Array2::<f64>::zeros((valid_length, schema.encoded_width()));
    // Forward-fill state per channel: last real value / last category index.
    let mut last_real = vec![0.0f64; schema.raw_width()];
    let mut last_cat = vec![0usize; schema.raw_width()];

    for (t, row) in record.hours.iter().take(valid_length).enumerate() {
        if row.len() != schema.raw_width() {
            return Err(DatasetError::RowWidthMismatch {
                episode_id: record.episode_id.clone(),
                hour: t + 1,
                expected: schema.raw_width(),
                found: row.len(),
            });
        }
        for (c, (def, slot)) in schema.channels.iter().zip(row).enumerate() {
            match def.kind {
                ChannelKind::Real => {
                    match slot {
                        Some(ChannelValue::Real(v)) => {
                            if !v.is_finite() {
                                return Err(DatasetError::Validation(format!(
                                    "episode {} hour {} channel {}: non-finite value",
                                    record.episode_id,
                                    t + 1,
                                    def.name
                                )));
                            }
                            last_real[c] = *v;
                        }
                        Some(ChannelValue::Category(_)) => {
                            return Err(DatasetError::ChannelKindMismatch {
                                episode_id: record.episode_id.clone(),
                                channel: def.name.clone(),
                                expected: "real",
                            });
                        }
                        None => {}
                    }
                    values[(t, offsets[c])] = last_real[c];
                }
                ChannelKind::Categorical => {
                    match slot {
                        Some(ChannelValue::Category(name)) => {
                            let idx = def.categories.iter().position(|k| k == name).ok_or_else(
                                || DatasetError::UnknownCategory {
                                    episode_id: record.episode_id.clone(),
                                    channel: def.name.clone(),
                                    value: name.clone(),
                                },
                            )?;
                            last_cat[c] = idx;
                        }
                        Some(ChannelValue::Real(_)) => {
                            return Err(DatasetError::ChannelKindMismatch {
                                episode_id: record.episode_id.clone(),
                                channel: def.name.clone(),
                                expected: "categorical",
                            });
                        }
                        None => {}
                    }
                    values[(t, offsets[c] + last_cat[c])] = 1.0;
                }
            }
        }
    }

    let mut labels = Vec::with_capacity(tasks.len());
    for task in tasks {
        let bit = record
            .labels
            .get(task)
            .ok_or_else(|| DatasetError::MissingLabel {
                episode_id: record.episode_id.clone(),
                task: task.clone(),
            })?;
        labels.push(*bit);
    }

    Ok(EncodedInstance {
        episode_id: record.episode_id.clone(),
        values,
        labels,
    })
}

/// Encodes every record of a raw split, keeping the split's task order.
pub fn encode_split(
    raw: &RawSplit,
    schema: &ChannelSchema,
    horizon: usize,
) -> Result<DatasetSplit, DatasetError> {
    let enc = |records: &[EpisodeRecord]| -> Result<Vec<EncodedInstance>, DatasetError> {
        records
            .iter()
            .map(|r| encode_record(r, schema, horizon, &raw.task_names))
            .collect()
    };
    Ok(DatasetSplit {
        train: enc(&raw.train)?,
        validation: enc(&raw.validation)?,
        test: enc(&raw.test)?,
        task_names: raw.task_names.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ChannelDef;

    fn schema_real_cat() -> ChannelSchema {
        ChannelSchema::new(vec![
            ChannelDef {
                name: "hr".into(),
                kind: ChannelKind::Real,
                categories: vec![],
            },
            ChannelDef {
                name: "gcs".into(),
                kind: ChannelKind::Categorical,
                categories: vec!["a".into(), "b".into(), "c".into(), "d".into(), "e".into()],
            },
        ])
        .unwrap()
    }

    fn record(hours: Vec<Vec<Option<ChannelValue>>>) -> EpisodeRecord {
        EpisodeRecord {
            episode_id: "ep0".into(),
            hours,
            labels: [("t".to_string(), 1u8)].into_iter().collect(),
        }
    }

    #[test]
    fn real_value_is_copied_in_place() {
        let schema = schema_real_cat();
        let rec = record(vec![
            vec![Some(ChannelValue::Real(1.0)), None],
            vec![Some(ChannelValue::Real(2.0)), None],
            vec![Some(ChannelValue::Real(7.2)), None],
        ]);
        let enc = encode_record(&rec, &schema, 48, &["t".into()]).unwrap();
        assert_eq!(enc.values[(2, 0)], 7.2);
        assert_eq!(enc.valid_length(), 3);
        assert_eq!(enc.labels, vec![1]);
    }

    #[test]
    fn categorical_expands_to_one_hot_block() {
        let schema = schema_real_cat();
        let rec = record(vec![vec![
            Some(ChannelValue::Real(0.0)),
            Some(ChannelValue::Category("c".into())),
        ]]);
        let enc = encode_record(&rec, &schema, 48, &["t".into()]).unwrap();
        assert_eq!(
            enc.values.row(0).to_vec(),
            vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn missing_values_forward_fill_then_default() {
        let schema = schema_real_cat();
        let rec = record(vec![
            vec![None, None],
            vec![Some(ChannelValue::Real(3.5)), Some(ChannelValue::Category("b".into()))],
            vec![None, None],
        ]);
        let enc = encode_record(&rec, &schema, 48, &["t".into()]).unwrap();
        // Hour 1: defaults (0.0, first category).
        assert_eq!(enc.values.row(0).to_vec(), vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        // Hour 3: carried forward from hour 2.
        assert_eq!(enc.values.row(2).to_vec(), vec![3.5, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn rows_beyond_horizon_are_dropped() {
        let schema = schema_real_cat();
        let rec = record(
            (0..10)
                .map(|i| vec![Some(ChannelValue::Real(i as f64)), None])
                .collect(),
        );
        let enc = encode_record(&rec, &schema, 4, &["t".into()]).unwrap();
        assert_eq!(enc.valid_length(), 4);
        assert_eq!(enc.values[(3, 0)], 3.0);
    }

    #[test]
    fn unknown_category_is_a_schema_mismatch() {
        let schema = schema_real_cat();
        let rec = record(vec![vec![None, Some(ChannelValue::Category("zz".into()))]]);
        let err = encode_record(&rec, &schema, 48, &["t".into()]).unwrap_err();
        assert!(matches!(err, DatasetError::UnknownCategory { .. }));
    }

    #[test]
    fn empty_record_is_rejected() {
        let schema = schema_real_cat();
        let rec = record(vec![]);
        let err = encode_record(&rec, &schema, 48, &["t".into()]).unwrap_err();
        assert!(matches!(err, DatasetError::EmptyEpisode(_)));
    }

    #[test]
    fn benchmark_layout_encodes_to_width_76() {
        // 12 real channels plus 5 categoricals with the clinical benchmark's
        // category counts gives the expected n = 76 encoded columns.
        let mut channels: Vec<ChannelDef> = (0..12)
            .map(|i| ChannelDef {
                name: format!("real_{i:02}"),
                kind: ChannelKind::Real,
                categories: vec![],
            })
            .collect();
        for (i, count) in [6usize, 13, 5, 12, 28].into_iter().enumerate() {
            channels.push(ChannelDef {
                name: format!("cat_{i:02}"),
                kind: ChannelKind::Categorical,
                categories: (0..count).map(|k| format!("k{k}")).collect(),
            });
        }
        let schema = ChannelSchema::new(channels).unwrap();
        assert_eq!(schema.encoded_width(), 76);
    }

    #[test]
    fn every_retained_step_is_exactly_one_hot() {
        let schema = schema_real_cat();
        let rec = record(vec![
            vec![Some(ChannelValue::Real(1.0)), Some(ChannelValue::Category("e".into()))],
            vec![None, Some(ChannelValue::Category("a".into()))],
            vec![None, None],
        ]);
        let enc = encode_record(&rec, &schema, 48, &["t".into()]).unwrap();
        for t in 0..enc.valid_length() {
            let block: f64 = enc.values.row(t).iter().skip(1).sum();
            assert_eq!(block, 1.0);
        }
        assert!(enc.values.iter().all(|v| v.is_finite()));
    }
}
