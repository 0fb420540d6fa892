//! Multilingual low-resource NLP toolkit.
//!
//! The crate covers a complete desk-scale pipeline for five low-resource
//! languages (Mongolian, Tibetan, Uyghur, Kazakh, Korean):
//!
//! - [`corpus`]: document cleaning, length filtering, 8:1:1 splitting and
//!   class balancing over JSON-Lines datasets;
//! - [`segment`]: per-language tokenization — whitespace words, Tibetan
//!   syllables, and lexicon-driven longest-match morphemes;
//! - [`bpe`]: a shared byte-pair-encoding subword vocabulary learned across
//!   all languages, with encoding, decoding and coverage reports;
//! - [`word2vec`]: skip-gram word embeddings with negative sampling;
//! - [`numerics`]: a minimal dense-tensor autodiff engine and optimizer;
//! - [`mlm`]: masked-language-model pretraining of a multilingual
//!   transformer encoder;
//! - [`classify`]: a classifier zoo over word embeddings, encoder
//!   fine-tuning, and macro-F1 evaluation;
//! - [`pipeline`]: stage orchestration with a reproducibility manifest and a
//!   bundled synthetic mini-corpus.
//!
//! Every trainer is deterministic given a seed. Start with the runnable
//! examples (`cargo run --example <name>`); the `milmo` binary exposes each
//! pipeline stage as a subcommand.

pub mod bpe;
pub mod classify;
pub mod corpus;
pub mod mlm;
pub mod numerics;
pub mod pipeline;
pub mod rng;
pub mod segment;
pub mod word2vec;

pub use corpus::Language;
