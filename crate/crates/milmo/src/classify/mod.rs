//! Text classification: the word2vec classifier zoo, encoder fine-tuning,
//! and macro-F1 evaluation.

mod eval;
mod finetune;
mod train;
mod zoo;

pub use eval::{
    evaluate, read_predictions, write_predictions, ClassMetrics, EvalReport, Prediction,
};
pub use finetune::{fine_tune, FineTuneSchedule, FineTunedClassifier, Pooling, SubwordExample};
pub use train::{train_classifier, validation_macro_f1, EncodedExample, EpochPoint, TrainSchedule};
pub use zoo::{build_classifier, Arch, ZooBound, ZooHyper, ZooModel};

use thiserror::Error;

use crate::mlm::MlmError;
use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid label set: {0}")]
    InvalidLabelSet(String),
    #[error("empty training set")]
    EmptyDataset,
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),
    #[error("input error: {0}")]
    Input(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Mlm(#[from] MlmError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
