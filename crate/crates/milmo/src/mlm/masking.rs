//! The masking policy and masked-batch construction.

use crate::bpe::{SubwordVocab, MASK, PAD};
use crate::numerics::IGNORE_INDEX;
use crate::rng::Rng;

use super::MlmError;

/// A rectangular batch of token ids.
#[derive(Debug, Clone, PartialEq)]
pub struct IdBatch {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u32>,
}

impl IdBatch {
    pub fn new(rows: usize, cols: usize, data: Vec<u32>) -> Self {
        assert_eq!(rows * cols, data.len());
        IdBatch { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<u32>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols));
        IdBatch {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Independent per-token masking: select with probability `mask_prob`, then
/// replace with the mask token, a random vocabulary token, or keep the
/// original, with the given branch probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskingPolicy {
    pub mask_prob: f64,
    pub replace_mask: f64,
    pub replace_random: f64,
    pub keep: f64,
}

impl Default for MaskingPolicy {
    fn default() -> Self {
        MaskingPolicy {
            mask_prob: 0.15,
            replace_mask: 0.8,
            replace_random: 0.1,
            keep: 0.1,
        }
    }
}

impl MaskingPolicy {
    pub fn validate(&self) -> Result<(), MlmError> {
        if !(0.0..=1.0).contains(&self.mask_prob) {
            return Err(MlmError::Config(format!(
                "mask_prob {} outside [0, 1]",
                self.mask_prob
            )));
        }
        let branches = [self.replace_mask, self.replace_random, self.keep];
        if branches.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(MlmError::Config("branch probabilities outside [0, 1]".into()));
        }
        let sum: f64 = branches.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MlmError::Config(format!(
                "branch probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

/// A batch ready for the encoder: corrupted inputs plus the original ids at
/// the positions the model must predict.
#[derive(Debug, Clone)]
pub struct MaskedBatch {
    pub input_ids: IdBatch,
    /// Row-major `[rows * cols]`; original id where a prediction is due,
    /// [`IGNORE_INDEX`] elsewhere.
    pub labels: Vec<u32>,
    /// Row-major `[rows * cols]`; 1 for real tokens, 0 for padding.
    pub attention_mask: Vec<u8>,
    /// One language id per row.
    pub lang_ids: Vec<u32>,
}

impl MaskedBatch {
    /// An unmasked batch (no prediction targets): what [`encode`] callers
    /// build when they just want hidden states for inference.
    ///
    /// [`encode`]: crate::mlm::MlmModel::encode
    pub fn plain(rows: &[Vec<u32>], lang_ids: &[u32]) -> Self {
        let ids = IdBatch::from_rows(rows);
        let attention = ids.data.iter().map(|&i| u8::from(i != PAD)).collect();
        MaskedBatch {
            labels: vec![IGNORE_INDEX; ids.data.len()],
            attention_mask: attention,
            input_ids: ids,
            lang_ids: lang_ids.to_vec(),
        }
    }

    pub fn masked_positions(&self) -> usize {
        self.labels.iter().filter(|&&l| l != IGNORE_INDEX).count()
    }
}

/// Apply `policy` to a batch. Padding ([`PAD`]) is never selected; random
/// replacements are drawn uniformly from the non-special vocabulary ids.
pub fn mask_batch(
    ids: &IdBatch,
    lang_ids: &[u32],
    policy: &MaskingPolicy,
    vocab: &SubwordVocab,
    rng: &mut Rng,
) -> MaskedBatch {
    debug_assert_eq!(lang_ids.len(), ids.rows);
    debug_assert!(!ids.data.contains(&MASK), "input already contains masks");
    let non_special = vocab.non_special_range();
    let span = (non_special.end - non_special.start) as usize;
    let mut input = ids.data.clone();
    let mut labels = vec![IGNORE_INDEX; input.len()];
    let mut attention = vec![0u8; input.len()];
    for (i, slot) in input.iter_mut().enumerate() {
        if *slot == PAD {
            continue;
        }
        attention[i] = 1;
        if !rng.gen_bool(policy.mask_prob) {
            continue;
        }
        labels[i] = *slot;
        let branch = rng.gen_f64();
        if branch < policy.replace_mask {
            *slot = MASK;
        } else if branch < policy.replace_mask + policy.replace_random {
            *slot = non_special.start + rng.gen_range(span) as u32;
        }
        // else: keep the original token.
    }
    MaskedBatch {
        input_ids: IdBatch::new(ids.rows, ids.cols, input),
        labels,
        attention_mask: attention,
        lang_ids: lang_ids.to_vec(),
    }
}
