//! Fine-tuning the pretrained encoder for classification.
//!
//! The classification input is the encoder representation pooled to a single
//! vector (the first position by default, or the mean over non-pad
//! positions), followed by a linear layer and softmax; training minimizes
//! the cross-entropy of the gold classes. All encoder parameters train
//! together with the head.

use serde::{Deserialize, Serialize};

use crate::bpe::BOS;
use crate::mlm::{Checkpoint, MlmModel};
use crate::numerics::{Adam, AdamConfig, Graph, ParamSet, Tensor, Var};
use crate::rng::{labeled_seed, Rng};

use super::eval::evaluate;
use super::train::EpochPoint;
use super::zoo::argmax;
use super::ClassifyError;

/// How the per-position hidden states become one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    FirstPosition,
    MeanOverNonpad,
}

impl Pooling {
    pub fn parse(s: &str) -> Result<Self, ClassifyError> {
        match s {
            "first_position" => Ok(Pooling::FirstPosition),
            "mean_over_nonpad" => Ok(Pooling::MeanOverNonpad),
            other => Err(ClassifyError::Config(format!("unknown pooling {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FineTuneSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub pooling: Pooling,
}

impl Default for FineTuneSchedule {
    fn default() -> Self {
        FineTuneSchedule {
            epochs: 5,
            batch_size: 8,
            lr: 1e-3,
            seed: 1,
            pooling: Pooling::FirstPosition,
        }
    }
}

/// A fine-tuned classifier: the (updated) encoder, the head, and the label
/// inventory.
#[derive(Debug, Clone)]
pub struct FineTunedClassifier {
    pub model: MlmModel,
    pub labels: Vec<String>,
    pub pooling: Pooling,
    pub lang_id: u32,
}

/// One fine-tuning example: BPE subword ids plus a label index.
pub type SubwordExample = (Vec<u32>, usize);

impl FineTunedClassifier {
    /// Prepend BOS and truncate to the encoder's input budget.
    fn prepare(&self, ids: &[u32]) -> Vec<u32> {
        let mut input = Vec::with_capacity((ids.len() + 1).min(self.model.config.max_len));
        input.push(BOS);
        input.extend(ids.iter().copied().take(self.model.config.max_len - 1));
        input
    }

    fn logits(
        &self,
        g: &mut Graph,
        bound: &crate::mlm::BoundParams,
        ids: &[u32],
    ) -> Result<Var, ClassifyError> {
        let input = self.prepare(ids);
        let mask = vec![1u8; input.len()];
        let hidden = self
            .model
            .forward_seq(g, bound, &input, &mask, self.lang_id)?;
        let pooled = match self.pooling {
            Pooling::FirstPosition => g.slice_rows(hidden, 0, 1)?,
            Pooling::MeanOverNonpad => {
                let mean = g.mean_over_rows(hidden)?;
                g.reshape(mean, &[1, self.model.config.emb_dim])?
            }
        };
        let w = bound_var(&self.model.params, bound, "head.w");
        let b = bound_var(&self.model.params, bound, "head.b");
        let h = g.matmul(pooled, w)?;
        Ok(g.add_bias(h, b)?)
    }

    /// Predicted label index in evaluation mode.
    pub fn predict(&self, ids: &[u32]) -> Result<usize, ClassifyError> {
        let mut g = Graph::new();
        let bound = self.model.bind(&mut g);
        let logits = self.logits(&mut g, &bound, ids)?;
        Ok(argmax(g.value(logits).data()))
    }

    /// The pooled representation fed to the classification head, as a
    /// `[1, emb_dim]` tensor. Useful as a sentence feature extractor.
    pub fn pooled_representation(&self, ids: &[u32]) -> Result<Tensor, ClassifyError> {
        let mut g = Graph::new();
        let bound = self.model.bind(&mut g);
        let input = self.prepare(ids);
        let mask = vec![1u8; input.len()];
        let hidden = self
            .model
            .forward_seq(&mut g, &bound, &input, &mask, self.lang_id)?;
        let pooled = match self.pooling {
            Pooling::FirstPosition => g.slice_rows(hidden, 0, 1)?,
            Pooling::MeanOverNonpad => {
                let mean = g.mean_over_rows(hidden)?;
                g.reshape(mean, &[1, self.model.config.emb_dim])?
            }
        };
        Ok(g.value(pooled).clone())
    }

    /// Macro-F1 over an encoded set.
    pub fn macro_f1(&self, examples: &[SubwordExample]) -> Result<f64, ClassifyError> {
        let gold: Vec<String> = examples
            .iter()
            .map(|(_, label)| self.labels[*label].clone())
            .collect();
        let mut pred = Vec::with_capacity(examples.len());
        for (ids, _) in examples {
            pred.push(self.labels[self.predict(ids)?].clone());
        }
        Ok(evaluate(&gold, &pred, &self.labels)?.macro_f1)
    }
}

fn bound_var(params: &ParamSet, bound: &crate::mlm::BoundParams, name: &str) -> Var {
    bound.vars()[params.index_of(name).unwrap_or_else(|| panic!("missing {name}"))]
}

/// Fine-tune the checkpointed encoder on labeled subword sequences. The
/// returned classifier carries the parameters of the epoch with the best
/// validation macro-F1.
pub fn fine_tune(
    checkpoint: &Checkpoint,
    train: &[SubwordExample],
    valid: &[SubwordExample],
    labels: &[String],
    lang_id: u32,
    schedule: &FineTuneSchedule,
) -> Result<(FineTunedClassifier, Vec<EpochPoint>), ClassifyError> {
    if labels.len() < 2 {
        return Err(ClassifyError::InvalidLabelSet(format!(
            "need at least 2 classes, got {}",
            labels.len()
        )));
    }
    if train.is_empty() {
        return Err(ClassifyError::EmptyDataset);
    }
    let config = checkpoint.config;
    let vocab = config.vocab_size as u32;
    for (ids, label) in train.iter().chain(valid) {
        if let Some(&bad) = ids.iter().find(|&&id| id >= vocab) {
            return Err(ClassifyError::VocabMismatch(format!(
                "subword id {bad} outside checkpoint vocabulary of {vocab}"
            )));
        }
        if *label >= labels.len() {
            return Err(ClassifyError::Config(format!(
                "label index {label} outside {} classes",
                labels.len()
            )));
        }
    }

    // Encoder parameters plus a fresh classification head.
    let mut params = checkpoint.params.clone();
    let mut rng = Rng::new(labeled_seed(schedule.seed, "finetune-head"));
    params.add_normal("head.w", &[config.emb_dim, labels.len()], 0.02, &mut rng);
    params.add_zeros("head.b", &[labels.len()]);
    let model = MlmModel::from_parts(config, params)?;

    let mut classifier = FineTunedClassifier {
        model,
        labels: labels.to_vec(),
        pooling: schedule.pooling,
        lang_id,
    };
    let mut adam = Adam::new(AdamConfig::with_lr(schedule.lr), &classifier.model.params);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curves = Vec::with_capacity(schedule.epochs);
    let mut best: Option<(f64, ParamSet)> = None;

    for epoch in 0..schedule.epochs {
        let mut rng = Rng::new(labeled_seed(schedule.seed, &format!("finetune-epoch-{epoch}")));
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(schedule.batch_size) {
            let mut g = Graph::for_training(labeled_seed(
                schedule.seed,
                &format!("finetune-dropout-{epoch}-{batches}"),
            ));
            let bound = classifier.model.bind(&mut g);
            let mut rows = Vec::with_capacity(batch.len());
            let mut targets = Vec::with_capacity(batch.len());
            for &idx in batch {
                let (ids, label) = &train[idx];
                rows.push(classifier.logits(&mut g, &bound, ids)?);
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
            adam.step(&mut classifier.model.params, &collected)?;
        }
        let valid_f1 = if valid.is_empty() {
            f64::NAN
        } else {
            classifier.macro_f1(valid)?
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
                best = Some((valid_f1, classifier.model.params.clone()));
            }
        }
    }
    if let Some((_, params)) = best {
        classifier.model.params = params;
    }
    Ok((classifier, curves))
}
