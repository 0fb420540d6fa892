//! Encoder hyperparameters.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MlmError;

/// Transformer encoder configuration. Field names match the config-file
/// keys one to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlmConfig {
    pub emb_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub dropout: f64,
    pub n_langs: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    /// Feed-forward hidden size as a multiple of `emb_dim`.
    #[serde(default = "default_ff_mult")]
    pub ff_mult: usize,
    /// Tie the output projection to the token embedding.
    #[serde(default)]
    pub tie_output: bool,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_ff_mult() -> usize {
    4
}

fn default_seed() -> u64 {
    1
}

impl MlmConfig {
    /// The published full-scale configuration: 12 layers, 2048-dim
    /// embeddings, 8 heads, 256-token inputs, 70k shared vocabulary over 5
    /// languages. Supported by every code path but far too large for tests.
    pub fn base() -> Self {
        MlmConfig {
            emb_dim: 2048,
            n_layers: 12,
            n_heads: 8,
            dropout: 0.1,
            n_langs: 5,
            max_len: 256,
            vocab_size: 70_000,
            ff_mult: 4,
            tie_output: false,
            seed: 1,
        }
    }

    /// A desk-scale configuration for experiments and the bundled pipeline.
    pub fn toy(vocab_size: usize) -> Self {
        MlmConfig {
            emb_dim: 32,
            n_layers: 2,
            n_heads: 2,
            dropout: 0.1,
            n_langs: 5,
            max_len: 32,
            vocab_size,
            ff_mult: 4,
            tie_output: false,
            seed: 1,
        }
    }

    /// The smallest config the gradient checker exercises.
    pub fn micro() -> Self {
        MlmConfig {
            emb_dim: 8,
            n_layers: 1,
            n_heads: 1,
            dropout: 0.0,
            n_langs: 5,
            max_len: 8,
            vocab_size: 12,
            ff_mult: 4,
            tie_output: false,
            seed: 1,
        }
    }

    pub fn ff_dim(&self) -> usize {
        self.emb_dim * self.ff_mult
    }

    pub fn head_dim(&self) -> usize {
        self.emb_dim / self.n_heads
    }

    pub fn validate(&self) -> Result<(), MlmError> {
        if self.n_heads == 0 || self.emb_dim % self.n_heads != 0 {
            return Err(MlmError::Config(format!(
                "emb_dim {} must be divisible by n_heads {}",
                self.emb_dim, self.n_heads
            )));
        }
        if self.max_len == 0 {
            return Err(MlmError::Config("max_len must be at least 1".into()));
        }
        if self.vocab_size == 0 || self.n_langs == 0 || self.n_layers == 0 {
            return Err(MlmError::Config(
                "vocab_size, n_langs and n_layers must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(MlmError::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    /// Parse a key-value config file. Accepts the keys at top level or
    /// under an `[mlm]` section, so both a bare model config and a full
    /// pipeline config work.
    pub fn from_file(path: &Path) -> Result<Self, MlmError> {
        let content = std::fs::read_to_string(path)?;
        let value: toml::Value = content
            .parse()
            .map_err(|e| MlmError::Config(format!("{}: {e}", path.display())))?;
        let section = match value.get("mlm") {
            Some(section) => section.clone(),
            None => value,
        };
        let config: MlmConfig = section
            .try_into()
            .map_err(|e| MlmError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }
}
