use super::{adam_step, AdamState, EpochStats, PretrainedModel, TrainConfig, TrainError};
use crate::dataset::{DatasetSplit, EncodedInstance};
use crate::rnn::{
    backward_bptt, forward, init_params, instance_loss, DropoutMasks, Gradients, GruStack,
    HeadParams,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

/// Trains a GRU stack plus head on the split's source tasks.
///
/// Mini-batches are drawn in a freshly shuffled order each epoch (seeded);
/// the final short batch is used as-is. After every epoch the validation
/// loss is computed in evaluation mode and the parameters achieving the
/// minimum are kept; training stops after `patience` epochs without
/// improvement or at `max_epochs`. When the split has no validation list
/// the running training loss takes its place as the stopping metric.
///
/// The whole run is a deterministic function of `(split, config, h, L)`:
/// per-instance gradients inside a batch are computed in parallel but
/// reduced in instance order.
pub fn fit_source(
    split: &DatasetSplit,
    config: &TrainConfig,
    hidden_size: usize,
    depth: usize,
) -> Result<PretrainedModel, TrainError> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let num_tasks = split.num_tasks();
    for inst in split.train.iter().chain(&split.validation) {
        if inst.labels.len() != num_tasks {
            return Err(TrainError::LabelMismatch {
                episode_id: inst.episode_id.clone(),
                expected: num_tasks,
                got: inst.labels.len(),
            });
        }
    }
    let input_size = split.train[0].width();

    let (mut stack, mut head) = init_params(input_size, hidden_size, depth, num_tasks, config.seed)?;
    let mut adam = AdamState::new(&stack, &head);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(SHUFFLE_STREAM);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(DROPOUT_STREAM);

    let mut history: Vec<EpochStats> = Vec::new();
    let mut best: Option<(f64, usize, GruStack, HeadParams)> = None;
    let mut epochs_without_improvement = 0usize;

    let mut order: Vec<usize> = (0..split.train.len()).collect();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0f64;
        for batch in order.chunks(config.batch_size) {
            // Masks are drawn sequentially in batch order so the run stays
            // deterministic no matter how the parallel map is scheduled.
            let masks: Vec<Option<DropoutMasks>> = batch
                .iter()
                .map(|&i| {
                    if config.dropout > 0.0 {
                        Some(DropoutMasks::sample(
                            split.train[i].valid_length(),
                            hidden_size,
                            depth,
                            config.dropout,
                            &mut dropout_rng,
                        ))
                    } else {
                        None
                    }
                })
                .collect();

            let results: Vec<Result<(Gradients, f64), TrainError>> = batch
                .par_iter()
                .zip(masks.into_par_iter())
                .map(|(&i, mask)| {
                    let inst = &split.train[i];
                    let trace = forward(&inst.values.view(), &stack, &head, mask)?;
                    let pair = backward_bptt(&trace, &inst.labels, &stack, &head)?;
                    Ok(pair)
                })
                .collect();

            let mut batch_grads = Gradients::zeros_like(&stack, &head);
            let mut batch_loss = 0.0f64;
            for result in results {
                let (grads, loss) = result?;
                batch_grads.add_assign(&grads);
                batch_loss += loss;
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch });
            }
            loss_sum += batch_loss;
            batch_grads.scale(1.0 / batch.len() as f64);
            adam_step(&mut stack, &mut head, &batch_grads, &mut adam, config)
                .map_err(|e| match e {
                    TrainError::NonFiniteGradient { .. } => TrainError::NonFiniteGradient { epoch },
                    other => other,
                })?;
        }
        let train_loss = loss_sum / split.train.len() as f64;

        let val_loss = if split.validation.is_empty() {
            train_loss
        } else {
            evaluation_loss(&split.validation, &stack, &head)
        };
        if !val_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch });
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });

        let improved = best.as_ref().map_or(true, |(b, ..)| val_loss < *b);
        if improved {
            best = Some((val_loss, epoch, stack.clone(), head.clone()));
            epochs_without_improvement = 0;
        } else {
            epochs_without_improvement += 1;
            if epochs_without_improvement >= config.patience {
                break;
            }
        }
    }

    let (best_val_loss, best_epoch, stack, head) = best.expect("at least one epoch ran");
    Ok(PretrainedModel {
        stack,
        head,
        task_names: split.task_names.clone(),
        history,
        best_epoch,
        best_val_loss,
    })
}

/// Mean per-instance loss in evaluation mode (no dropout), reduced in
/// instance order.
fn evaluation_loss(
    instances: &[EncodedInstance],
    stack: &GruStack,
    head: &HeadParams,
) -> f64 {
    let losses: Vec<f64> = instances
        .par_iter()
        .map(|inst| {
            let trace =
                forward(&inst.values.view(), stack, head, None).expect("shapes already checked");
            instance_loss(&trace.y_hat, &inst.labels)
        })
        .collect();
    losses.iter().sum::<f64>() / instances.len() as f64
}

/// Picks the winning `(hidden size, validation loss)` pair: minimum loss,
/// ties broken toward the smaller hidden size.
pub fn select_candidate(results: &[(usize, f64)]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &(h, loss) in results {
        best = match best {
            None => Some((h, loss)),
            Some((bh, bl)) => {
                if loss < bl || (loss == bl && h < bh) {
                    Some((h, loss))
                } else {
                    Some((bh, bl))
                }
            }
        };
    }
    best.map(|(h, _)| h)
}

/// Trains one model per hidden-size candidate and returns the one with the
/// lowest best-epoch validation loss, together with every candidate's loss.
pub fn hidden_size_sweep(
    split: &DatasetSplit,
    config: &TrainConfig,
    candidates: &[usize],
    depth: usize,
) -> Result<(PretrainedModel, Vec<(usize, f64)>), TrainError> {
    if candidates.is_empty() {
        return Err(TrainError::EmptyCandidates);
    }
    let mut losses: Vec<(usize, f64)> = Vec::with_capacity(candidates.len());
    let mut models: Vec<(usize, PretrainedModel)> = Vec::new();
    for &h in candidates {
        let model = fit_source(split, config, h, depth)?;
        losses.push((h, model.best_val_loss));
        models.push((h, model));
    }
    let winner = select_candidate(&losses).expect("candidates are non-empty");
    let model = models
        .into_iter()
        .find(|(h, _)| *h == winner)
        .map(|(_, m)| m)
        .expect("winner came from the candidate list");
    Ok((model, losses))
}
