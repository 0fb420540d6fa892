//! Pipeline orchestration: stage execution over a data directory, a
//! reproducibility manifest, the bundled synthetic mini-corpus, and the
//! final report.

mod config;
mod manifest;
pub mod mini_corpus;
mod report;
mod stages;

pub use config::{
    BpeSection, ClassifySection, CorpusSection, MlmSection, PipelineConfig, SegmentSection,
    Word2VecSection, DATA_DIR_ENV,
};
pub use manifest::{hash_bytes, hash_file, params_hash, Manifest, StageEntry, MANIFEST_FILE};
pub use report::render_table;
pub use stages::{run_all, run_stage, STAGE_ORDER};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stage {stage:?} requires {missing:?} to have run first")]
    StageDependency { stage: String, missing: String },
    #[error("data error: {0}")]
    Data(String),
}

impl PipelineError {
    /// CLI exit code: 2 config, 3 dependency, 4 data.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::StageDependency { .. } => 3,
            PipelineError::Data(_) => 4,
        }
    }
}

impl From<crate::corpus::CorpusError> for PipelineError {
    fn from(e: crate::corpus::CorpusError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<crate::segment::SegmentError> for PipelineError {
    fn from(e: crate::segment::SegmentError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<crate::bpe::BpeError> for PipelineError {
    fn from(e: crate::bpe::BpeError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<crate::word2vec::Word2VecError> for PipelineError {
    fn from(e: crate::word2vec::Word2VecError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<crate::mlm::MlmError> for PipelineError {
    fn from(e: crate::mlm::MlmError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<crate::classify::ClassifyError> for PipelineError {
    fn from(e: crate::classify::ClassifyError) -> Self {
        PipelineError::Data(e.to_string())
    }
}
