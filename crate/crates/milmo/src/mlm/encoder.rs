//! The multilingual transformer encoder.
//!
//! Token, learned position and language embeddings are summed, then passed
//! through post-layer-norm blocks of multi-head self-attention and a GELU
//! feed-forward, with residual connections. Padded positions are masked out
//! of attention by a large negative score bias.

use crate::numerics::{Graph, ParamSet, Tensor, Var};
use crate::rng::{labeled_seed, Rng};

use super::masking::MaskedBatch;
use super::{MlmConfig, MlmError};

const LN_EPS: f64 = 1e-5;
const NEG_INF: f64 = -1e30;

/// Encoder parameters plus the recipe to run them.
#[derive(Debug, Clone)]
pub struct MlmModel {
    pub config: MlmConfig,
    pub params: ParamSet,
}

/// Graph handles for every parameter, aligned with `params` indices.
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    /// Wrap externally created leaves, in parameter order. This is how the
    /// gradient checker drives a whole model from its own bound tensors.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        BoundParams { vars }
    }

    fn get(&self, params: &ParamSet, name: &str) -> Var {
        self.vars[params
            .index_of(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Final hidden states for a batch, shaped `[batch, len, emb_dim]`.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub hidden: Tensor,
}

impl EncoderOutput {
    pub fn batch(&self) -> usize {
        self.hidden.shape()[0]
    }

    pub fn len(&self) -> usize {
        self.hidden.shape()[1]
    }

    pub fn is_empty(&self) -> bool {
        self.batch() == 0
    }

    /// Hidden state of one position as a slice of length `emb_dim`.
    pub fn at(&self, row: usize, pos: usize) -> &[f64] {
        let (l, d) = (self.hidden.shape()[1], self.hidden.shape()[2]);
        let start = (row * l + pos) * d;
        &self.hidden.data()[start..start + d]
    }
}

impl MlmModel {
    /// Initialize parameters from `config.seed`: normal(0, 0.02) weights,
    /// zero biases, unit layer-norm gains.
    pub fn new(config: MlmConfig) -> Result<Self, MlmError> {
        config.validate()?;
        let mut rng = Rng::new(labeled_seed(config.seed, "mlm-init"));
        let d = config.emb_dim;
        let ff = config.ff_dim();
        let std = 0.02;
        let mut params = ParamSet::new();
        params.add_normal("tok_emb", &[config.vocab_size, d], std, &mut rng);
        params.add_normal("pos_emb", &[config.max_len, d], std, &mut rng);
        params.add_normal("lang_emb", &[config.n_langs, d], std, &mut rng);
        for layer in 0..config.n_layers {
            for name in ["wq", "wk", "wv", "wo"] {
                params.add_normal(&format!("l{layer}.attn.{name}"), &[d, d], std, &mut rng);
            }
            for name in ["bq", "bk", "bv", "bo"] {
                params.add_zeros(&format!("l{layer}.attn.{name}"), &[d]);
            }
            params.add_full(&format!("l{layer}.ln1.gain"), &[d], 1.0);
            params.add_zeros(&format!("l{layer}.ln1.bias"), &[d]);
            params.add_normal(&format!("l{layer}.ffn.w1"), &[d, ff], std, &mut rng);
            params.add_zeros(&format!("l{layer}.ffn.b1"), &[ff]);
            params.add_normal(&format!("l{layer}.ffn.w2"), &[ff, d], std, &mut rng);
            params.add_zeros(&format!("l{layer}.ffn.b2"), &[d]);
            params.add_full(&format!("l{layer}.ln2.gain"), &[d], 1.0);
            params.add_zeros(&format!("l{layer}.ln2.bias"), &[d]);
        }
        if !config.tie_output {
            params.add_normal("out.w", &[d, config.vocab_size], std, &mut rng);
        }
        params.add_zeros("out.b", &[config.vocab_size]);
        Ok(MlmModel { config, params })
    }

    /// Rebuild a model around restored parameters.
    pub fn from_parts(config: MlmConfig, params: ParamSet) -> Result<Self, MlmError> {
        config.validate()?;
        Ok(MlmModel { config, params })
    }

    /// Bind every parameter as a trainable graph leaf.
    pub fn bind(&self, g: &mut Graph) -> BoundParams {
        let vars = (0..self.params.len())
            .map(|i| g.param(self.params.tensor(i).clone()))
            .collect();
        BoundParams { vars }
    }

    fn check_batch(&self, batch: &MaskedBatch) -> Result<(), MlmError> {
        if batch.input_ids.cols > self.config.max_len {
            return Err(MlmError::Length {
                len: batch.input_ids.cols,
                max_len: self.config.max_len,
            });
        }
        if let Some(&id) = batch
            .input_ids
            .data
            .iter()
            .find(|&&id| id as usize >= self.config.vocab_size)
        {
            return Err(MlmError::Vocab {
                id,
                vocab_size: self.config.vocab_size,
            });
        }
        if let Some(&lang) = batch
            .lang_ids
            .iter()
            .find(|&&l| l as usize >= self.config.n_langs)
        {
            return Err(MlmError::Vocab {
                id: lang,
                vocab_size: self.config.n_langs,
            });
        }
        Ok(())
    }

    /// Forward one sequence; returns the `[len, emb_dim]` hidden states.
    pub fn forward_seq(
        &self,
        g: &mut Graph,
        bound: &BoundParams,
        ids: &[u32],
        attention_mask: &[u8],
        lang: u32,
    ) -> Result<Var, MlmError> {
        let p = &self.params;
        let cfg = &self.config;
        let len = ids.len();
        let (dh, nh) = (cfg.head_dim(), cfg.n_heads);

        let tok = g.gather(bound.get(p, "tok_emb"), ids)?;
        let positions: Vec<u32> = (0..len as u32).collect();
        let pos = g.gather(bound.get(p, "pos_emb"), &positions)?;
        let langs = vec![lang; len];
        let lng = g.gather(bound.get(p, "lang_emb"), &langs)?;
        let sum = g.add(tok, pos)?;
        let sum = g.add(sum, lng)?;
        let mut x = g.dropout(sum, cfg.dropout);

        // Key-side padding bias: a padded key gets a huge negative score in
        // every row, vanishing under softmax.
        let mut bias = vec![0.0; len * len];
        for (j, &m) in attention_mask.iter().enumerate() {
            if m == 0 {
                for i in 0..len {
                    bias[i * len + j] = NEG_INF;
                }
            }
        }
        let bias = g.constant(Tensor::from_vec(&[len, len], bias)?);

        for layer in 0..cfg.n_layers {
            let name = |part: &str| format!("l{layer}.{part}");
            // Self-attention sublayer.
            let q = g.matmul(x, bound.get(p, &name("attn.wq")))?;
            let q = g.add_bias(q, bound.get(p, &name("attn.bq")))?;
            let k = g.matmul(x, bound.get(p, &name("attn.wk")))?;
            let k = g.add_bias(k, bound.get(p, &name("attn.bk")))?;
            let v = g.matmul(x, bound.get(p, &name("attn.wv")))?;
            let v = g.add_bias(v, bound.get(p, &name("attn.bv")))?;

            let mut heads = Vec::with_capacity(nh);
            for h in 0..nh {
                let qh = g.slice_cols(q, h * dh, dh)?;
                let kh = g.slice_cols(k, h * dh, dh)?;
                let vh = g.slice_cols(v, h * dh, dh)?;
                let scores = g.matmul_nt(qh, kh)?;
                let scores = g.scale(scores, 1.0 / (dh as f64).sqrt());
                let scores = g.add(scores, bias)?;
                let probs = g.softmax(scores);
                let probs = g.dropout(probs, cfg.dropout);
                heads.push(g.matmul(probs, vh)?);
            }
            let merged = g.concat_cols(&heads)?;
            let o = g.matmul(merged, bound.get(p, &name("attn.wo")))?;
            let o = g.add_bias(o, bound.get(p, &name("attn.bo")))?;
            let o = g.dropout(o, cfg.dropout);
            let res = g.add(x, o)?;
            x = g.layer_norm(
                res,
                bound.get(p, &name("ln1.gain")),
                bound.get(p, &name("ln1.bias")),
                LN_EPS,
            )?;

            // Feed-forward sublayer.
            let h1 = g.matmul(x, bound.get(p, &name("ffn.w1")))?;
            let h1 = g.add_bias(h1, bound.get(p, &name("ffn.b1")))?;
            let h1 = g.gelu(h1);
            let h2 = g.matmul(h1, bound.get(p, &name("ffn.w2")))?;
            let h2 = g.add_bias(h2, bound.get(p, &name("ffn.b2")))?;
            let h2 = g.dropout(h2, cfg.dropout);
            let res = g.add(x, h2)?;
            x = g.layer_norm(
                res,
                bound.get(p, &name("ln2.gain")),
                bound.get(p, &name("ln2.bias")),
                LN_EPS,
            )?;
        }
        Ok(x)
    }

    /// Vocabulary logits for one sequence's hidden states.
    pub fn project_logits(
        &self,
        g: &mut Graph,
        bound: &BoundParams,
        hidden: Var,
    ) -> Result<Var, MlmError> {
        let logits = if self.config.tie_output {
            g.matmul_nt(hidden, bound.get(&self.params, "tok_emb"))?
        } else {
            g.matmul(hidden, bound.get(&self.params, "out.w"))?
        };
        Ok(g.add_bias(logits, bound.get(&self.params, "out.b"))?)
    }

    /// Forward a whole batch in evaluation mode and collect hidden states.
    pub fn encode(&self, batch: &MaskedBatch) -> Result<EncoderOutput, MlmError> {
        self.check_batch(batch)?;
        let (b, l, d) = (batch.input_ids.rows, batch.input_ids.cols, self.config.emb_dim);
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let mut data = Vec::with_capacity(b * l * d);
        for row in 0..b {
            let hidden = self.forward_seq(
                &mut g,
                &bound,
                batch.input_ids.row(row),
                &batch.attention_mask[row * l..(row + 1) * l],
                batch.lang_ids[row],
            )?;
            data.extend_from_slice(g.value(hidden).data());
        }
        Ok(EncoderOutput {
            hidden: Tensor::from_vec(&[b, l, d], data)?,
        })
    }

    /// Batch MLM loss: logits over the vocabulary at every position,
    /// cross-entropy against the non-ignored labels.
    pub fn mlm_loss(
        &self,
        g: &mut Graph,
        bound: &BoundParams,
        batch: &MaskedBatch,
    ) -> Result<Var, MlmError> {
        self.check_batch(batch)?;
        let l = batch.input_ids.cols;
        let mut per_seq = Vec::with_capacity(batch.input_ids.rows);
        for row in 0..batch.input_ids.rows {
            let hidden = self.forward_seq(
                g,
                bound,
                batch.input_ids.row(row),
                &batch.attention_mask[row * l..(row + 1) * l],
                batch.lang_ids[row],
            )?;
            per_seq.push(self.project_logits(g, bound, hidden)?);
        }
        let all_logits = g.concat_rows(&per_seq)?;
        Ok(g.cross_entropy(all_logits, &batch.labels)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bpe::PAD;
    use crate::mlm::masking::IdBatch;
    use crate::numerics::IGNORE_INDEX;

    fn plain_batch(rows: &[Vec<u32>], langs: &[u32]) -> MaskedBatch {
        MaskedBatch::plain(rows, langs)
    }

    #[test]
    fn output_shape_is_batch_len_dim() {
        let model = MlmModel::new(MlmConfig::micro()).unwrap();
        let batch = plain_batch(&[vec![5, 6, 7], vec![8, 9, PAD]], &[0, 1]);
        let out = model.encode(&batch).unwrap();
        assert_eq!(out.hidden.shape(), &[2, 3, 8]);
        assert!(out.hidden.is_finite());
    }

    #[test]
    fn oversize_sequence_is_rejected() {
        let model = MlmModel::new(MlmConfig::micro()).unwrap();
        let ids: Vec<u32> = (0..9).map(|i| 1 + (i % 8) as u32).collect();
        let batch = plain_batch(&[ids], &[0]);
        assert!(matches!(
            model.encode(&batch),
            Err(MlmError::Length { len: 9, max_len: 8 })
        ));
    }

    #[test]
    fn out_of_vocab_id_is_rejected() {
        let model = MlmModel::new(MlmConfig::micro()).unwrap();
        let batch = plain_batch(&[vec![5, 12]], &[0]);
        assert!(matches!(model.encode(&batch), Err(MlmError::Vocab { id: 12, .. })));
    }

    #[test]
    fn padding_does_not_disturb_real_positions() {
        let model = MlmModel::new(MlmConfig::micro()).unwrap();
        let short = plain_batch(&[vec![5, 6, 7]], &[2]);
        let padded = plain_batch(&[vec![5, 6, 7, PAD, PAD]], &[2]);
        let a = model.encode(&short).unwrap();
        let b = model.encode(&padded).unwrap();
        for pos in 0..3 {
            for (x, y) in a.at(0, pos).iter().zip(b.at(0, pos)) {
                assert!((x - y).abs() < 1e-9, "position {pos}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn encode_is_deterministic() {
        let model = MlmModel::new(MlmConfig::micro()).unwrap();
        let batch = plain_batch(&[vec![5, 6, 7, 8]], &[3]);
        let a = model.encode(&batch).unwrap();
        let b = model.encode(&batch).unwrap();
        assert_eq!(a.hidden, b.hidden);
    }

    #[test]
    fn same_seed_same_initialization() {
        let a = MlmModel::new(MlmConfig::micro()).unwrap();
        let b = MlmModel::new(MlmConfig::micro()).unwrap();
        for ((na, ta), (nb, tb)) in a.params.iter().zip(b.params.iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta, tb);
        }
    }

    #[test]
    fn attention_rows_over_live_keys_sum_to_one() {
        // Reconstructed via softmax directly: the row bias keeps padded
        // keys at zero probability, so live-key probabilities sum to 1.
        let mut g = Graph::new();
        let mut bias_row = vec![0.0, 0.0, NEG_INF];
        let mut scores = vec![0.3, -1.2, 0.9];
        for (s, b) in scores.iter_mut().zip(&mut bias_row) {
            *s += *b;
        }
        let v = g.constant(Tensor::from_vec(&[1, 3], scores).unwrap());
        let probs = g.softmax(v);
        let row = g.value(probs).data();
        assert!(row[2] == 0.0);
        assert!((row[0] + row[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn uniform_logits_loss_is_log_vocab() {
        // With an untrained but zeroed output head the logits are the bias,
        // i.e. uniform: the loss is exactly ln(vocab_size).
        let mut config = MlmConfig::micro();
        config.vocab_size = 8;
        let mut model = MlmModel::new(config).unwrap();
        // Zero the projection so logits are identical across the vocab.
        if let Some(idx) = model.params.index_of("out.w") {
            let t = model.params.tensor_mut(idx);
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let ids = IdBatch::from_rows(&[vec![5, 6, 7]]);
        let mut labels = vec![IGNORE_INDEX; 3];
        labels[1] = 6;
        let batch = MaskedBatch {
            input_ids: ids,
            labels,
            attention_mask: vec![1, 1, 1],
            lang_ids: vec![0],
        };
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let loss = model.mlm_loss(&mut g, &bound, &batch).unwrap();
        assert!((g.value(loss).item() - 8.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn no_masked_positions_is_undefined_loss() {
        let model = MlmModel::new(MlmConfig::micro()).unwrap();
        let batch = plain_batch(&[vec![5, 6]], &[0]);
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        assert!(matches!(
            model.mlm_loss(&mut g, &bound, &batch),
            Err(MlmError::Numerics(crate::numerics::NumericsError::UndefinedLoss))
        ));
    }
}
