//! Pipeline configuration.
//!
//! One TOML file configures every stage; the `[mlm]` section uses the same
//! keys as the model config file, so `MlmConfig::from_file` accepts a
//! pipeline config too. `MILMO_DATA_DIR` overrides the configured data
//! root.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;

/// Environment variable overriding the data root.
pub const DATA_DIR_ENV: &str = "MILMO_DATA_DIR";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub data_dir: PathBuf,
    pub corpus: CorpusSection,
    pub segment: SegmentSection,
    pub bpe: BpeSection,
    pub word2vec: Word2VecSection,
    pub mlm: MlmSection,
    pub classify: ClassifySection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            data_dir: PathBuf::from("data"),
            corpus: CorpusSection::default(),
            segment: SegmentSection::default(),
            bpe: BpeSection::default(),
            word2vec: Word2VecSection::default(),
            mlm: MlmSection::default(),
            classify: ClassifySection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSection {
    /// Synthesize the bundled mini-corpus when the raw file is absent.
    pub generate: bool,
    pub docs_per_lang: usize,
    pub classes: Vec<String>,
    pub min_length: usize,
    pub raw_file: String,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            generate: true,
            docs_per_lang: 200,
            classes: vec![
                "culture".into(),
                "economy".into(),
                "nature".into(),
                "sport".into(),
            ],
            min_length: 20,
            raw_file: "raw.jsonl".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentSection {
    /// Tibetan granularity: "syllable" or "word" (word needs a lexicon).
    pub tibetan: String,
    pub korean_lexicon: String,
    pub tibetan_lexicon: String,
}

impl Default for SegmentSection {
    fn default() -> Self {
        SegmentSection {
            tibetan: "syllable".into(),
            korean_lexicon: "lexicons/ko.txt".into(),
            tibetan_lexicon: String::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BpeSection {
    pub target_vocab: usize,
    pub end_of_word_marker: String,
}

impl Default for BpeSection {
    fn default() -> Self {
        BpeSection {
            target_vocab: 400,
            end_of_word_marker: crate::bpe::END_OF_WORD.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Word2VecSection {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub min_count: u64,
    pub initial_lr: f64,
    pub subsample: f64,
}

impl Default for Word2VecSection {
    fn default() -> Self {
        Word2VecSection {
            dim: 32,
            window: 5,
            negatives: 5,
            epochs: 5,
            min_count: 1,
            initial_lr: 0.025,
            // The synthetic mini-corpus has a tiny type inventory where
            // every word counts as frequent; subsampling would discard most
            // of the stream.
            subsample: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MlmSection {
    pub emb_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub dropout: f64,
    pub n_langs: usize,
    pub max_len: usize,
    /// 0 means "use the trained BPE vocabulary size".
    pub vocab_size: usize,
    pub ff_mult: usize,
    pub tie_output: bool,
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub log_every: u64,
}

impl Default for MlmSection {
    fn default() -> Self {
        MlmSection {
            emb_dim: 48,
            n_layers: 2,
            n_heads: 2,
            dropout: 0.1,
            n_langs: 5,
            max_len: 32,
            vocab_size: 0,
            ff_mult: 4,
            tie_output: false,
            steps: 500,
            batch_size: 8,
            lr: 2e-3,
            log_every: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifySection {
    pub archs: Vec<String>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub finetune_epochs: usize,
    pub finetune_batch_size: usize,
    pub finetune_lr: f64,
    pub pooling: String,
    /// Classifier inputs are truncated to this many tokens.
    pub max_tokens: usize,
}

impl Default for ClassifySection {
    fn default() -> Self {
        ClassifySection {
            archs: crate::classify::Arch::ZOO
                .iter()
                .map(|a| a.name().to_string())
                .collect(),
            epochs: 16,
            batch_size: 16,
            lr: 5e-3,
            finetune_epochs: 12,
            finetune_batch_size: 8,
            finetune_lr: 3e-3,
            pooling: "first_position".into(),
            max_tokens: 48,
        }
    }
}

impl PipelineConfig {
    /// Parse a TOML config file and apply the `MILMO_DATA_DIR` override.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let content = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut config: PipelineConfig = toml::from_str(&content)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        // A relative data_dir resolves against the config file's directory.
        if config.data_dir.is_relative() {
            if let Some(parent) = path.parent() {
                config.data_dir = parent.join(&config.data_dir);
            }
        }
        config.apply_env();
        Ok(config)
    }

    /// Defaults plus the environment override; used when no file is given.
    pub fn from_defaults() -> Self {
        let mut config = PipelineConfig::default();
        config.apply_env();
        config
    }

    fn apply_env(&mut self) {
        if let Ok(dir) = std::env::var(DATA_DIR_ENV) {
            if !dir.is_empty() {
                self.data_dir = PathBuf::from(dir);
            }
        }
    }

    /// Absolute-or-relative path inside the data root.
    pub fn path(&self, relative: &str) -> PathBuf {
        self.data_dir.join(relative)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_cover_all_sections() {
        let c = PipelineConfig::default();
        assert_eq!(c.corpus.docs_per_lang, 200);
        assert_eq!(c.corpus.classes.len(), 4);
        assert_eq!(c.bpe.target_vocab, 400);
        assert_eq!(c.classify.archs.len(), 7);
        assert_eq!(c.mlm.n_langs, 5);
    }

    #[test]
    fn partial_file_fills_in_defaults() {
        let dir = std::env::temp_dir().join("milmo-config");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("partial.toml");
        std::fs::write(&path, "seed = 7\n[bpe]\ntarget_vocab = 250\n").unwrap();
        let c = PipelineConfig::load(&path).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.bpe.target_vocab, 250);
        assert_eq!(c.word2vec.window, 5);
        assert!(c.data_dir.ends_with("data"));
    }

    #[test]
    fn malformed_file_is_a_config_error() {
        let dir = std::env::temp_dir().join("milmo-config");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("broken.toml");
        std::fs::write(&path, "seed = \"not a number\"\n").unwrap();
        assert!(matches!(
            PipelineConfig::load(&path),
            Err(PipelineError::Config(_))
        ));
    }

    #[test]
    fn mlm_section_is_a_valid_model_config() {
        let dir = std::env::temp_dir().join("milmo-config");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("full.toml");
        std::fs::write(
            &path,
            "[mlm]\nemb_dim = 16\nn_layers = 1\nn_heads = 2\ndropout = 0.0\nn_langs = 5\nmax_len = 16\nvocab_size = 99\n",
        )
        .unwrap();
        let model = crate::mlm::MlmConfig::from_file(&path).unwrap();
        assert_eq!(model.vocab_size, 99);
        assert_eq!(model.emb_dim, 16);
    }
}
