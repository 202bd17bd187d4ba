use super::{
    encode_split, ChannelKind, ChannelSchema, ChannelValue, DatasetError, DatasetSplit,
    EpisodeRecord, RawSplit,
};
use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

const SCHEMA_FILE: &str = "schema.json";
const TASKS_FILE: &str = "tasks.json";
const SPLIT_FILES: [(&str, &str); 3] = [
    ("train", "train.jsonl"),
    ("validation", "val.jsonl"),
    ("test", "test.jsonl"),
];

/// Writes a dataset directory: `schema.json`, `tasks.json`, and one JSONL
/// file per split list (one record per line, missing values as `null`).
pub fn save_dataset(
    raw: &RawSplit,
    schema: &ChannelSchema,
    dir: &Path,
) -> Result<(), DatasetError> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join(SCHEMA_FILE), schema)?;
    write_json(&dir.join(TASKS_FILE), &raw.task_names)?;
    for (name, file) in SPLIT_FILES {
        let records = match name {
            "train" => &raw.train,
            "validation" => &raw.validation,
            _ => &raw.test,
        };
        let mut out = fs::File::create(dir.join(file))?;
        for record in records {
            let line = serde_json::to_string(record).map_err(|e| DatasetError::Json {
                path: file.to_string(),
                source: e,
            })?;
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

/// Loads a dataset directory back into raw records, validating every record
/// against the schema and task list.
pub fn load_dataset(dir: &Path) -> Result<(RawSplit, ChannelSchema), DatasetError> {
    let schema: ChannelSchema = read_json(&dir.join(SCHEMA_FILE))?;
    schema.validate()?;
    let task_names: Vec<String> = read_json(&dir.join(TASKS_FILE))?;

    let mut lists: Vec<Vec<EpisodeRecord>> = Vec::new();
    for (_, file) in SPLIT_FILES {
        lists.push(read_jsonl(&dir.join(file), &schema, &task_names)?);
    }
    let test = lists.pop().unwrap();
    let validation = lists.pop().unwrap();
    let train = lists.pop().unwrap();

    let mut seen: BTreeSet<&str> = BTreeSet::new();
    for record in train.iter().chain(&validation).chain(&test) {
        if !seen.insert(&record.episode_id) {
            return Err(DatasetError::Validation(format!(
                "episode {} appears in more than one split list",
                record.episode_id
            )));
        }
    }

    Ok((
        RawSplit {
            train,
            validation,
            test,
            task_names,
        },
        schema,
    ))
}

/// Convenience: load and encode in one step.
pub fn load_encoded(
    dir: &Path,
    horizon: usize,
) -> Result<(DatasetSplit, ChannelSchema), DatasetError> {
    let (raw, schema) = load_dataset(dir)?;
    let split = encode_split(&raw, &schema, horizon)?;
    Ok((split, schema))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), DatasetError> {
    let body = serde_json::to_string_pretty(value).map_err(|e| DatasetError::Json {
        path: path.display().to_string(),
        source: e,
    })?;
    fs::write(path, body + "\n")?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, DatasetError> {
    let body = fs::read_to_string(path)?;
    serde_json::from_str(&body).map_err(|e| DatasetError::Json {
        path: path.display().to_string(),
        source: e,
    })
}

fn read_jsonl(
    path: &Path,
    schema: &ChannelSchema,
    task_names: &[String],
) -> Result<Vec<EpisodeRecord>, DatasetError> {
    let file = fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EpisodeRecord =
            serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
        validate_record(&record, schema, task_names).map_err(|e| DatasetError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

fn validate_record(
    record: &EpisodeRecord,
    schema: &ChannelSchema,
    task_names: &[String],
) -> Result<(), DatasetError> {
    for (t, row) in record.hours.iter().enumerate() {
        if row.len() != schema.raw_width() {
            return Err(DatasetError::RowWidthMismatch {
                episode_id: record.episode_id.clone(),
                hour: t + 1,
                expected: schema.raw_width(),
                found: row.len(),
            });
        }
        for (def, slot) in schema.channels.iter().zip(row) {
            match (def.kind, slot) {
                (ChannelKind::Real, Some(ChannelValue::Category(_))) => {
                    return Err(DatasetError::ChannelKindMismatch {
                        episode_id: record.episode_id.clone(),
                        channel: def.name.clone(),
                        expected: "real",
                    })
                }
                (ChannelKind::Categorical, Some(ChannelValue::Real(_))) => {
                    return Err(DatasetError::ChannelKindMismatch {
                        episode_id: record.episode_id.clone(),
                        channel: def.name.clone(),
                        expected: "categorical",
                    })
                }
                (ChannelKind::Categorical, Some(ChannelValue::Category(name))) => {
                    if !def.categories.contains(name) {
                        return Err(DatasetError::UnknownCategory {
                            episode_id: record.episode_id.clone(),
                            channel: def.name.clone(),
                            value: name.clone(),
                        });
                    }
                }
                _ => {}
            }
        }
    }
    for task in task_names {
        match record.labels.get(task) {
            None => {
                return Err(DatasetError::MissingLabel {
                    episode_id: record.episode_id.clone(),
                    task: task.clone(),
                })
            }
            Some(bit) if *bit > 1 => {
                return Err(DatasetError::Validation(format!(
                    "episode {} label {task} must be 0 or 1, got {bit}",
                    record.episode_id
                )))
            }
            _ => {}
        }
    }
    Ok(())
}
