//! Mini-batch training shared by the zoo classifiers.

use crate::numerics::{Adam, AdamConfig, Graph, Tensor};
use crate::rng::{labeled_seed, Rng};

use super::eval::evaluate;
use super::zoo::ZooModel;
use super::ClassifyError;

/// One encoded example: embedding-vocabulary token ids and a label index.
pub type EncodedExample = (Vec<u32>, usize);

#[derive(Debug, Clone, Copy)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            epochs: 5,
            batch_size: 16,
            lr: 1e-3,
            seed: 1,
        }
    }
}

/// Loss/metric trajectory, one point per epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochPoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_macro_f1: f64,
}

/// Train `model` in place; the parameters left in the model are the
/// best-validation snapshot (last epoch when no validation set is given).
pub fn train_classifier(
    model: &mut ZooModel,
    train: &[EncodedExample],
    valid: &[EncodedExample],
    schedule: &TrainSchedule,
) -> Result<Vec<EpochPoint>, ClassifyError> {
    if train.is_empty() {
        return Err(ClassifyError::EmptyDataset);
    }
    let vocab = model.vocab_size() as u32;
    for (ids, label) in train.iter().chain(valid) {
        if let Some(&bad) = ids.iter().find(|&&id| id >= vocab) {
            return Err(ClassifyError::VocabMismatch(format!(
                "token id {bad} outside embedding vocabulary of {vocab}"
            )));
        }
        if *label >= model.n_classes() {
            return Err(ClassifyError::Config(format!(
                "label index {label} outside {} classes",
                model.n_classes()
            )));
        }
    }

    let mut adam = Adam::new(AdamConfig::with_lr(schedule.lr), &model.params);
    let mut curves = Vec::with_capacity(schedule.epochs);
    let mut best: Option<(f64, crate::numerics::ParamSet)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..schedule.epochs {
        let mut rng = Rng::new(labeled_seed(schedule.seed, &format!("clf-epoch-{epoch}")));
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(schedule.batch_size) {
            let mut g = Graph::for_training(labeled_seed(
                schedule.seed,
                &format!("clf-dropout-{epoch}-{batches}"),
            ));
            let bound = model.bind(&mut g);
            let mut rows = Vec::with_capacity(batch.len());
            let mut targets = Vec::with_capacity(batch.len());
            for &idx in batch {
                let (ids, label) = &train[idx];
                rows.push(model.forward(&mut g, &bound, ids)?);
                targets.push(*label as u32);
            }
            let logits = g.concat_rows(&rows)?;
            let loss = g.cross_entropy(logits, &targets)?;
            loss_sum += g.value(loss).item();
            batches += 1;
            let grads = g.backward(loss)?;
            let collected: Vec<Option<Tensor>> = bound
                .vars()
                .iter()
                .map(|&v| grads.get(v).cloned())
                .collect();
            adam.step(&mut model.params, &collected)?;
        }
        let valid_f1 = if valid.is_empty() {
            f64::NAN
        } else {
            validation_macro_f1(model, valid)?
        };
        curves.push(EpochPoint {
            epoch,
            train_loss: loss_sum / batches.max(1) as f64,
            valid_macro_f1: valid_f1,
        });
        if !valid.is_empty() {
            let improved = match &best {
                Some((f1, _)) => valid_f1 > *f1,
                None => true,
            };
            if improved {
                best = Some((valid_f1, model.params.clone()));
            }
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok(curves)
}

/// Macro-F1 of the model's predictions over an encoded set.
pub fn validation_macro_f1(
    model: &ZooModel,
    examples: &[EncodedExample],
) -> Result<f64, ClassifyError> {
    let gold: Vec<String> = examples
        .iter()
        .map(|(_, label)| model.labels[*label].clone())
        .collect();
    let mut pred = Vec::with_capacity(examples.len());
    for (ids, _) in examples {
        pred.push(model.labels[model.predict(ids)?].clone());
    }
    Ok(evaluate(&gold, &pred, &model.labels)?.macro_f1)
}
