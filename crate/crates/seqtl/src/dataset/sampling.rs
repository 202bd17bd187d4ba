use super::{DatasetError, DatasetSplit, EncodedInstance};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

/// Removes held-out tasks from a split before source pre-training.
///
/// Train and validation keep only instances whose held-out labels are all 0,
/// so no information about the held-out tasks leaks into the source model.
/// The test list keeps every instance. Label vectors of all three lists are
/// re-indexed to the surviving source tasks (original order preserved).
pub fn filter_source_split(
    split: &DatasetSplit,
    held_out_tasks: &BTreeSet<String>,
) -> Result<DatasetSplit, DatasetError> {
    for task in held_out_tasks {
        if !split.task_names.contains(task) {
            return Err(DatasetError::UnknownTask(task.clone()));
        }
    }
    let keep: Vec<usize> = split
        .task_names
        .iter()
        .enumerate()
        .filter(|(_, name)| !held_out_tasks.contains(*name))
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(DatasetError::NoSourceTasks);
    }
    let drop: Vec<usize> = (0..split.task_names.len())
        .filter(|i| !keep.contains(i))
        .collect();

    let reindex = |inst: &EncodedInstance| EncodedInstance {
        episode_id: inst.episode_id.clone(),
        values: inst.values.clone(),
        labels: keep.iter().map(|&i| inst.labels[i]).collect(),
    };
    let filter = |instances: &[EncodedInstance]| {
        instances
            .iter()
            .filter(|inst| drop.iter().all(|&i| inst.labels[i] == 0))
            .map(reindex)
            .collect::<Vec<_>>()
    };

    Ok(DatasetSplit {
        train: filter(&split.train),
        validation: filter(&split.validation),
        test: split.test.iter().map(reindex).collect(),
        task_names: keep
            .iter()
            .map(|&i| split.task_names[i].clone())
            .collect(),
    })
}

/// Deterministic stratified subsample of target-task instances.
///
/// Each class (by the instance's first label) is cut down to
/// `round(fraction * class_size)`, never below 1 for a non-empty class. The
/// selection depends only on `(instances, fraction, seed)`; the returned
/// list keeps the original relative order.
pub fn subsample_labeled(
    instances: &[EncodedInstance],
    fraction: f64,
    seed: u64,
) -> Result<Vec<EncodedInstance>, DatasetError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(DatasetError::InvalidFraction(fraction));
    }
    let mut selected: Vec<usize> = Vec::new();
    for class in [0u8, 1u8] {
        let mut members: Vec<usize> = instances
            .iter()
            .enumerate()
            .filter(|(_, inst)| inst.labels.first().copied().unwrap_or(0) == class)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            continue;
        }
        let take = ((fraction * members.len() as f64).round() as usize)
            .max(1)
            .min(members.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(class as u64);
        members.shuffle(&mut rng);
        selected.extend(members.into_iter().take(take));
    }
    selected.sort_unstable();
    Ok(selected.into_iter().map(|i| instances[i].clone()).collect())
}
