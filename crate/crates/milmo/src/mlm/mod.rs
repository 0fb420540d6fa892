//! Masked-language-model pretraining.
//!
//! The objective hides 15% of the non-pad tokens of each 256-token input
//! (80% become the mask token, 10% a random vocabulary token, 10% stay) and
//! trains a transformer encoder with summed token, position and language
//! embeddings to recover the originals.

mod config;
mod encoder;
mod masking;
mod pretrain;

pub use config::MlmConfig;
pub use encoder::{BoundParams, EncoderOutput, MlmModel};
pub use masking::{mask_batch, IdBatch, MaskedBatch, MaskingPolicy};
pub use pretrain::{
    append_metrics, pack_streams, pretrain, resume, Checkpoint, LossPoint, PackedSequence,
    PretrainSchedule, SavedAdam,
};

use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum MlmError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("sequence length {len} exceeds max_len {max_len}")]
    Length { len: usize, max_len: usize },
    #[error("id {id} out of range ({vocab_size} entries)")]
    Vocab { id: u32, vocab_size: usize },
    #[error("empty corpus: nothing to pretrain on")]
    EmptyCorpus,
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
