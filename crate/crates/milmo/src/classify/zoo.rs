//! Classifier architectures over word embeddings.
//!
//! Every member takes a token id sequence, looks rows up in a word2vec
//! table (frozen by default), and produces class logits:
//!
//! - `textcnn`: parallel convolutions of widths 2/3/4, max-over-time;
//! - `textrnn`: bidirectional LSTM, concatenated final states;
//! - `textrnn_att`: bidirectional LSTM with additive attention pooling;
//! - `textrcnn`: bidirectional LSTM states joined with the embeddings,
//!   projected, then max-pooled;
//! - `fasttext`: mean of embeddings into a linear layer;
//! - `dpcnn`: region embedding and stride-2 pooled convolution blocks with
//!   residual connections;
//! - `transformer`: a small self-attention encoder with mean pooling.

use std::fmt;

use crate::numerics::{Graph, ParamSet, Tensor, Var};
use crate::rng::{labeled_seed, Rng};
use crate::word2vec::EmbeddingTable;

use super::ClassifyError;

/// Architecture names as they appear on the command line and in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Arch {
    TextCnn,
    TextRnn,
    TextRnnAtt,
    TextRcnn,
    FastText,
    Dpcnn,
    Transformer,
    MlmFinetune,
}

impl Arch {
    /// The word2vec classifier zoo (everything but `mlm_finetune`).
    pub const ZOO: [Arch; 7] = [
        Arch::TextCnn,
        Arch::TextRnn,
        Arch::TextRnnAtt,
        Arch::TextRcnn,
        Arch::FastText,
        Arch::Dpcnn,
        Arch::Transformer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Arch::TextCnn => "textcnn",
            Arch::TextRnn => "textrnn",
            Arch::TextRnnAtt => "textrnn_att",
            Arch::TextRcnn => "textrcnn",
            Arch::FastText => "fasttext",
            Arch::Dpcnn => "dpcnn",
            Arch::Transformer => "transformer",
            Arch::MlmFinetune => "mlm_finetune",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ClassifyError> {
        match s {
            "textcnn" => Ok(Arch::TextCnn),
            "textrnn" => Ok(Arch::TextRnn),
            "textrnn_att" => Ok(Arch::TextRnnAtt),
            "textrcnn" => Ok(Arch::TextRcnn),
            "fasttext" => Ok(Arch::FastText),
            "dpcnn" => Ok(Arch::Dpcnn),
            "transformer" => Ok(Arch::Transformer),
            "mlm_finetune" => Ok(Arch::MlmFinetune),
            other => Err(ClassifyError::Config(format!("unknown arch {other:?}"))),
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Architecture hyperparameters with the usual defaults.
#[derive(Debug, Clone)]
pub struct ZooHyper {
    pub conv_widths: Vec<usize>,
    pub filters: usize,
    pub rnn_hidden: usize,
    pub attention_dim: usize,
    pub rcnn_projection: usize,
    pub dpcnn_channels: usize,
    pub dpcnn_blocks: usize,
    pub tf_heads: usize,
    pub tf_layers: usize,
    pub tf_max_len: usize,
    pub dropout: f64,
    pub trainable_embeddings: bool,
}

impl Default for ZooHyper {
    fn default() -> Self {
        ZooHyper {
            conv_widths: vec![2, 3, 4],
            filters: 100,
            rnn_hidden: 128,
            attention_dim: 64,
            rcnn_projection: 128,
            dpcnn_channels: 250,
            dpcnn_blocks: 2,
            tf_heads: 2,
            tf_layers: 1,
            tf_max_len: 128,
            dropout: 0.1,
            trainable_embeddings: false,
        }
    }
}

impl ZooHyper {
    /// Shrunk defaults for fast desk-scale runs.
    pub fn small() -> Self {
        ZooHyper {
            filters: 16,
            rnn_hidden: 16,
            attention_dim: 8,
            rcnn_projection: 16,
            dpcnn_channels: 16,
            dpcnn_blocks: 2,
            tf_max_len: 96,
            ..Default::default()
        }
    }
}

/// A zoo classifier: frozen (or trainable) embeddings plus head parameters.
#[derive(Debug, Clone)]
pub struct ZooModel {
    pub arch: Arch,
    pub labels: Vec<String>,
    pub hyper: ZooHyper,
    pub dim: usize,
    pub params: ParamSet,
    embeddings: Tensor,
    emb_trainable: bool,
}

/// Per-graph handles: parameter vars plus the embedding table node.
pub struct ZooBound {
    vars: Vec<Var>,
    table: Var,
}

impl ZooBound {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

const LN_EPS: f64 = 1e-5;

/// Construct `arch` over the given embeddings. The label set must have at
/// least two classes.
pub fn build_classifier(
    arch: Arch,
    embeddings: &EmbeddingTable,
    labels: &[String],
    hyper: ZooHyper,
    seed: u64,
) -> Result<ZooModel, ClassifyError> {
    if arch == Arch::MlmFinetune {
        return Err(ClassifyError::Config(
            "mlm_finetune is built by fine_tune, not build_classifier".into(),
        ));
    }
    if labels.len() < 2 {
        return Err(ClassifyError::InvalidLabelSet(format!(
            "need at least 2 classes, got {}",
            labels.len()
        )));
    }
    let d = embeddings.dim;
    let n = labels.len();
    let h = &hyper;
    let mut rng = Rng::new(labeled_seed(seed, &format!("zoo-{}", arch.name())));
    let mut params = ParamSet::new();
    let std = 0.05;
    match arch {
        Arch::TextCnn => {
            for &w in &h.conv_widths {
                params.add_normal(&format!("conv{w}.w"), &[w * d, h.filters], std, &mut rng);
                params.add_zeros(&format!("conv{w}.b"), &[h.filters]);
            }
            let pooled = h.filters * h.conv_widths.len();
            params.add_normal("out.w", &[pooled, n], std, &mut rng);
            params.add_zeros("out.b", &[n]);
        }
        Arch::TextRnn | Arch::TextRnnAtt | Arch::TextRcnn => {
            for dir in ["fwd", "bwd"] {
                params.add_normal(&format!("lstm.{dir}.wx"), &[d, 4 * h.rnn_hidden], std, &mut rng);
                params.add_normal(
                    &format!("lstm.{dir}.wh"),
                    &[h.rnn_hidden, 4 * h.rnn_hidden],
                    std,
                    &mut rng,
                );
                params.add_zeros(&format!("lstm.{dir}.b"), &[4 * h.rnn_hidden]);
            }
            let states = 2 * h.rnn_hidden;
            match arch {
                Arch::TextRnn => {
                    params.add_normal("out.w", &[states, n], std, &mut rng);
                    params.add_zeros("out.b", &[n]);
                }
                Arch::TextRnnAtt => {
                    params.add_normal("att.w", &[states, h.attention_dim], std, &mut rng);
                    params.add_zeros("att.b", &[h.attention_dim]);
                    params.add_normal("att.v", &[h.attention_dim, 1], std, &mut rng);
                    params.add_normal("out.w", &[states, n], std, &mut rng);
                    params.add_zeros("out.b", &[n]);
                }
                Arch::TextRcnn => {
                    params.add_normal(
                        "proj.w",
                        &[states + d, h.rcnn_projection],
                        std,
                        &mut rng,
                    );
                    params.add_zeros("proj.b", &[h.rcnn_projection]);
                    params.add_normal("out.w", &[h.rcnn_projection, n], std, &mut rng);
                    params.add_zeros("out.b", &[n]);
                }
                _ => unreachable!(),
            }
        }
        Arch::FastText => {
            params.add_normal("out.w", &[d, n], std, &mut rng);
            params.add_zeros("out.b", &[n]);
        }
        Arch::Dpcnn => {
            let c = h.dpcnn_channels;
            params.add_normal("region.w", &[3 * d, c], std, &mut rng);
            params.add_zeros("region.b", &[c]);
            for which in ["pre.a", "pre.b"] {
                params.add_normal(&format!("{which}.w"), &[3 * c, c], std, &mut rng);
                params.add_zeros(&format!("{which}.b"), &[c]);
            }
            for block in 0..h.dpcnn_blocks {
                for which in ["a", "b"] {
                    params.add_normal(&format!("block{block}.{which}.w"), &[3 * c, c], std, &mut rng);
                    params.add_zeros(&format!("block{block}.{which}.b"), &[c]);
                }
            }
            params.add_normal("out.w", &[c, n], std, &mut rng);
            params.add_zeros("out.b", &[n]);
        }
        Arch::Transformer => {
            params.add_normal("pos_emb", &[h.tf_max_len, d], std, &mut rng);
            for layer in 0..h.tf_layers {
                for name in ["wq", "wk", "wv", "wo"] {
                    params.add_normal(&format!("l{layer}.attn.{name}"), &[d, d], std, &mut rng);
                }
                for name in ["bq", "bk", "bv", "bo"] {
                    params.add_zeros(&format!("l{layer}.attn.{name}"), &[d]);
                }
                params.add_full(&format!("l{layer}.ln1.gain"), &[d], 1.0);
                params.add_zeros(&format!("l{layer}.ln1.bias"), &[d]);
                params.add_normal(&format!("l{layer}.ffn.w1"), &[d, 4 * d], std, &mut rng);
                params.add_zeros(&format!("l{layer}.ffn.b1"), &[4 * d]);
                params.add_normal(&format!("l{layer}.ffn.w2"), &[4 * d, d], std, &mut rng);
                params.add_zeros(&format!("l{layer}.ffn.b2"), &[d]);
                params.add_full(&format!("l{layer}.ln2.gain"), &[d], 1.0);
                params.add_zeros(&format!("l{layer}.ln2.bias"), &[d]);
            }
            params.add_normal("out.w", &[d, n], std, &mut rng);
            params.add_zeros("out.b", &[n]);
            if d % h.tf_heads != 0 {
                return Err(ClassifyError::Config(format!(
                    "embedding dim {d} not divisible by {} heads",
                    h.tf_heads
                )));
            }
        }
        Arch::MlmFinetune => unreachable!(),
    }
    let emb_trainable = h.trainable_embeddings;
    if emb_trainable {
        params.add("embeddings", embeddings.input.clone());
    }
    Ok(ZooModel {
        arch,
        labels: labels.to_vec(),
        hyper,
        dim: d,
        params,
        embeddings: embeddings.input.clone(),
        emb_trainable,
    })
}

impl ZooModel {
    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.embeddings.shape()[0]
    }

    /// Bind parameters (and the embedding table) into a graph.
    pub fn bind(&self, g: &mut Graph) -> ZooBound {
        let vars: Vec<Var> = (0..self.params.len())
            .map(|i| g.param(self.params.tensor(i).clone()))
            .collect();
        self.bind_with(g, &vars)
    }

    /// Bind with externally created parameter leaves, in parameter order
    /// (used by the gradient checker).
    pub fn bind_with(&self, g: &mut Graph, vars: &[Var]) -> ZooBound {
        let table = if self.emb_trainable {
            vars[self.params.index_of("embeddings").expect("trainable table")]
        } else {
            g.constant(self.embeddings.clone())
        };
        ZooBound {
            vars: vars.to_vec(),
            table,
        }
    }

    fn p(&self, bound: &ZooBound, name: &str) -> Var {
        bound.vars[self
            .params
            .index_of(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))]
    }

    fn linear(&self, g: &mut Graph, bound: &ZooBound, x: Var, name: &str) -> Result<Var, ClassifyError> {
        let w = self.p(bound, &format!("{name}.w"));
        let b = self.p(bound, &format!("{name}.b"));
        let h = g.matmul(x, w)?;
        Ok(g.add_bias(h, b)?)
    }

    /// Embedding rows for `ids`, padded with zero rows to at least
    /// `min_len` positions.
    fn embed(
        &self,
        g: &mut Graph,
        bound: &ZooBound,
        ids: &[u32],
        min_len: usize,
    ) -> Result<Var, ClassifyError> {
        let x = if ids.is_empty() {
            g.constant(Tensor::zeros(&[1, self.dim]))
        } else {
            g.gather(bound.table, ids)?
        };
        let rows = g.value(x).shape()[0];
        if rows < min_len {
            let pad = g.constant(Tensor::zeros(&[min_len - rows, self.dim]));
            Ok(g.concat_rows(&[x, pad])?)
        } else {
            Ok(x)
        }
    }

    fn lstm_direction(
        &self,
        g: &mut Graph,
        bound: &ZooBound,
        x: Var,
        dir: &str,
        reverse: bool,
    ) -> Result<(Vec<Var>, Var), ClassifyError> {
        let hdim = self.hyper.rnn_hidden;
        let wx = self.p(bound, &format!("lstm.{dir}.wx"));
        let wh = self.p(bound, &format!("lstm.{dir}.wh"));
        let b = self.p(bound, &format!("lstm.{dir}.b"));
        let len = g.value(x).shape()[0];
        let mut h = g.constant(Tensor::zeros(&[1, hdim]));
        let mut c = g.constant(Tensor::zeros(&[1, hdim]));
        let mut states: Vec<Var> = vec![h; len];
        let order: Vec<usize> = if reverse {
            (0..len).rev().collect()
        } else {
            (0..len).collect()
        };
        for t in order {
            let xt = g.slice_rows(x, t, 1)?;
            let gx = g.matmul(xt, wx)?;
            let gh = g.matmul(h, wh)?;
            let gates = g.add(gx, gh)?;
            let gates = g.add_bias(gates, b)?;
            let i_gate = g.slice_cols(gates, 0, hdim)?;
            let f_gate = g.slice_cols(gates, hdim, hdim)?;
            let g_gate = g.slice_cols(gates, 2 * hdim, hdim)?;
            let o_gate = g.slice_cols(gates, 3 * hdim, hdim)?;
            let i_act = g.sigmoid(i_gate);
            let f_act = g.sigmoid(f_gate);
            let g_act = g.tanh(g_gate);
            let o_act = g.sigmoid(o_gate);
            let forgotten = g.mul(f_act, c)?;
            let written = g.mul(i_act, g_act)?;
            c = g.add(forgotten, written)?;
            let c_act = g.tanh(c);
            h = g.mul(o_act, c_act)?;
            states[t] = h;
        }
        Ok((states, h))
    }

    fn bilstm(
        &self,
        g: &mut Graph,
        bound: &ZooBound,
        x: Var,
    ) -> Result<(Var, Var), ClassifyError> {
        let (fwd_states, fwd_last) = self.lstm_direction(g, bound, x, "fwd", false)?;
        let (bwd_states, bwd_last) = self.lstm_direction(g, bound, x, "bwd", true)?;
        let mut rows = Vec::with_capacity(fwd_states.len());
        for (f, b) in fwd_states.iter().zip(&bwd_states) {
            rows.push(g.concat_cols(&[*f, *b])?);
        }
        let states = g.concat_rows(&rows)?;
        let finals = g.concat_cols(&[fwd_last, bwd_last])?;
        Ok((states, finals))
    }

    fn conv_same(
        &self,
        g: &mut Graph,
        bound: &ZooBound,
        x: Var,
        name: &str,
    ) -> Result<Var, ClassifyError> {
        let w = self.p(bound, &format!("{name}.w"));
        let b = self.p(bound, &format!("{name}.b"));
        Ok(g.conv1d(x, w, b, 3, 1)?)
    }

    /// Class logits for one example, shaped `[1, n_classes]`.
    pub fn forward(&self, g: &mut Graph, bound: &ZooBound, ids: &[u32]) -> Result<Var, ClassifyError> {
        let h = &self.hyper;
        match self.arch {
            Arch::FastText => {
                let x = self.embed(g, bound, ids, 1)?;
                let mean = g.mean_over_rows(x)?;
                let mean = g.reshape(mean, &[1, self.dim])?;
                self.linear(g, bound, mean, "out")
            }
            Arch::TextCnn => {
                let widest = h.conv_widths.iter().copied().max().unwrap_or(1);
                let x = self.embed(g, bound, ids, widest)?;
                let mut pooled = Vec::with_capacity(h.conv_widths.len());
                for &w in &h.conv_widths {
                    let wv = self.p(bound, &format!("conv{w}.w"));
                    let bv = self.p(bound, &format!("conv{w}.b"));
                    let conv = g.conv1d(x, wv, bv, w, 0)?;
                    let act = g.relu(conv);
                    let m = g.max_over_rows(act)?;
                    pooled.push(g.reshape(m, &[1, h.filters])?);
                }
                let cat = g.concat_cols(&pooled)?;
                let cat = g.dropout(cat, h.dropout);
                self.linear(g, bound, cat, "out")
            }
            Arch::TextRnn => {
                let x = self.embed(g, bound, ids, 1)?;
                let (_, finals) = self.bilstm(g, bound, x)?;
                let finals = g.dropout(finals, h.dropout);
                self.linear(g, bound, finals, "out")
            }
            Arch::TextRnnAtt => {
                let x = self.embed(g, bound, ids, 1)?;
                let (states, _) = self.bilstm(g, bound, x)?;
                let u = self.linear(g, bound, states, "att")?;
                let u = g.tanh(u);
                let scores = g.matmul(u, self.p(bound, "att.v"))?; // [L, 1]
                let len = g.value(scores).shape()[0];
                let scores = g.reshape(scores, &[1, len])?;
                let weights = g.softmax(scores);
                let pooled = g.matmul(weights, states)?; // [1, 2H]
                let pooled = g.dropout(pooled, h.dropout);
                self.linear(g, bound, pooled, "out")
            }
            Arch::TextRcnn => {
                let x = self.embed(g, bound, ids, 1)?;
                let (states, _) = self.bilstm(g, bound, x)?;
                let joined = g.concat_cols(&[states, x])?;
                let proj = self.linear(g, bound, joined, "proj")?;
                let proj = g.tanh(proj);
                let m = g.max_over_rows(proj)?;
                let m = g.reshape(m, &[1, h.rcnn_projection])?;
                let m = g.dropout(m, h.dropout);
                self.linear(g, bound, m, "out")
            }
            Arch::Dpcnn => {
                let x = self.embed(g, bound, ids, 3)?;
                let mut y = self.conv_same(g, bound, x, "region")?;
                // Pre-block pair of convolutions with a residual.
                let a = g.relu(y);
                let a = self.conv_same(g, bound, a, "pre.a")?;
                let b = g.relu(a);
                let b = self.conv_same(g, bound, b, "pre.b")?;
                y = g.add(y, b)?;
                for block in 0..h.dpcnn_blocks {
                    let pooled = g.max_pool1d(y, 3, 2)?;
                    let a = g.relu(pooled);
                    let a = self.conv_same(g, bound, a, &format!("block{block}.a"))?;
                    let b = g.relu(a);
                    let b = self.conv_same(g, bound, b, &format!("block{block}.b"))?;
                    y = g.add(pooled, b)?;
                }
                let m = g.max_over_rows(y)?;
                let m = g.reshape(m, &[1, h.dpcnn_channels])?;
                let m = g.dropout(m, h.dropout);
                self.linear(g, bound, m, "out")
            }
            Arch::Transformer => {
                let capped: Vec<u32> = ids.iter().copied().take(h.tf_max_len).collect();
                let x = self.embed(g, bound, &capped, 1)?;
                let len = g.value(x).shape()[0];
                let positions: Vec<u32> = (0..len as u32).collect();
                let pos = g.gather(self.p(bound, "pos_emb"), &positions)?;
                let mut y = g.add(x, pos)?;
                let dh = self.dim / h.tf_heads;
                for layer in 0..h.tf_layers {
                    let name = |part: &str| format!("l{layer}.{part}");
                    let q = self.linear_named(g, bound, y, &name("attn.wq"), &name("attn.bq"))?;
                    let k = self.linear_named(g, bound, y, &name("attn.wk"), &name("attn.bk"))?;
                    let v = self.linear_named(g, bound, y, &name("attn.wv"), &name("attn.bv"))?;
                    let mut heads = Vec::with_capacity(h.tf_heads);
                    for head in 0..h.tf_heads {
                        let qh = g.slice_cols(q, head * dh, dh)?;
                        let kh = g.slice_cols(k, head * dh, dh)?;
                        let vh = g.slice_cols(v, head * dh, dh)?;
                        let scores = g.matmul_nt(qh, kh)?;
                        let scores = g.scale(scores, 1.0 / (dh as f64).sqrt());
                        let probs = g.softmax(scores);
                        let probs = g.dropout(probs, h.dropout);
                        heads.push(g.matmul(probs, vh)?);
                    }
                    let merged = g.concat_cols(&heads)?;
                    let o = self.linear_named(g, bound, merged, &name("attn.wo"), &name("attn.bo"))?;
                    let o = g.dropout(o, h.dropout);
                    let res = g.add(y, o)?;
                    y = g.layer_norm(
                        res,
                        self.p(bound, &name("ln1.gain")),
                        self.p(bound, &name("ln1.bias")),
                        LN_EPS,
                    )?;
                    let f1 = self.linear_named(g, bound, y, &name("ffn.w1"), &name("ffn.b1"))?;
                    let f1 = g.gelu(f1);
                    let f2 = self.linear_named(g, bound, f1, &name("ffn.w2"), &name("ffn.b2"))?;
                    let f2 = g.dropout(f2, h.dropout);
                    let res = g.add(y, f2)?;
                    y = g.layer_norm(
                        res,
                        self.p(bound, &name("ln2.gain")),
                        self.p(bound, &name("ln2.bias")),
                        LN_EPS,
                    )?;
                }
                let mean = g.mean_over_rows(y)?;
                let mean = g.reshape(mean, &[1, self.dim])?;
                let mean = g.dropout(mean, h.dropout);
                self.linear(g, bound, mean, "out")
            }
            Arch::MlmFinetune => Err(ClassifyError::Config(
                "mlm_finetune has no zoo forward".into(),
            )),
        }
    }

    fn linear_named(
        &self,
        g: &mut Graph,
        bound: &ZooBound,
        x: Var,
        w: &str,
        b: &str,
    ) -> Result<Var, ClassifyError> {
        let wv = self.p(bound, w);
        let bv = self.p(bound, b);
        let h = g.matmul(x, wv)?;
        Ok(g.add_bias(h, bv)?)
    }

    /// Predicted class index in evaluation mode.
    pub fn predict(&self, ids: &[u32]) -> Result<usize, ClassifyError> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let logits = self.forward(&mut g, &bound, ids)?;
        Ok(argmax(g.value(logits).data()))
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check_many;
    use crate::word2vec::{build_word_vocab, train_skipgram, SkipGramConfig};
    use crate::corpus::Language;
    use crate::segment::{Granularity, TokenSequence};

    fn tiny_embeddings(dim: usize) -> EmbeddingTable {
        let seqs = vec![TokenSequence {
            tokens: ["alpha", "beta", "gamma", "delta", "epsilon"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            lang: Language::Kazakh,
            granularity: Granularity::Word,
        }];
        let vocab = build_word_vocab(&seqs, 1).unwrap();
        train_skipgram(
            &seqs,
            &vocab,
            &SkipGramConfig {
                dim,
                epochs: 1,
                seed: 8,
                ..Default::default()
            },
        )
        .unwrap()
    }

    fn micro_hyper() -> ZooHyper {
        ZooHyper {
            conv_widths: vec![2, 3],
            filters: 3,
            rnn_hidden: 3,
            attention_dim: 3,
            rcnn_projection: 3,
            dpcnn_channels: 3,
            dpcnn_blocks: 1,
            tf_heads: 2,
            tf_layers: 1,
            tf_max_len: 16,
            dropout: 0.0,
            trainable_embeddings: false,
        }
    }

    fn labels() -> Vec<String> {
        vec!["x".into(), "y".into()]
    }

    #[test]
    fn logits_shape_is_one_by_classes() {
        let emb = tiny_embeddings(4);
        for arch in Arch::ZOO {
            let model = build_classifier(arch, &emb, &labels(), micro_hyper(), 1).unwrap();
            let mut g = Graph::new();
            let bound = model.bind(&mut g);
            let logits = model.forward(&mut g, &bound, &[0, 1, 2, 3, 4]).unwrap();
            assert_eq!(g.value(logits).shape(), &[1, 2], "{arch}");
        }
    }

    #[test]
    fn short_and_empty_sequences_are_defined() {
        let emb = tiny_embeddings(4);
        for arch in Arch::ZOO {
            let model = build_classifier(arch, &emb, &labels(), micro_hyper(), 1).unwrap();
            for ids in [vec![], vec![0u32], vec![1, 2]] {
                let mut g = Graph::new();
                let bound = model.bind(&mut g);
                let logits = model.forward(&mut g, &bound, &ids).unwrap();
                assert!(g.value(logits).is_finite(), "{arch} with {} ids", ids.len());
            }
        }
    }

    #[test]
    fn unknown_arch_is_rejected() {
        assert!(Arch::parse("cnn").is_err());
        assert!(Arch::parse("textcnn").is_ok());
        let emb = tiny_embeddings(4);
        assert!(matches!(
            build_classifier(Arch::MlmFinetune, &emb, &labels(), micro_hyper(), 1),
            Err(ClassifyError::Config(_))
        ));
    }

    #[test]
    fn single_class_label_set_is_rejected() {
        let emb = tiny_embeddings(4);
        assert!(matches!(
            build_classifier(Arch::FastText, &emb, &["only".to_string()], micro_hyper(), 1),
            Err(ClassifyError::InvalidLabelSet(_))
        ));
    }

    #[test]
    fn forwards_are_deterministic_in_eval_mode() {
        let emb = tiny_embeddings(4);
        for arch in Arch::ZOO {
            let model = build_classifier(arch, &emb, &labels(), micro_hyper(), 3).unwrap();
            let run = || {
                let mut g = Graph::new();
                let bound = model.bind(&mut g);
                let logits = model.forward(&mut g, &bound, &[1, 2, 3]).unwrap();
                g.value(logits).data().to_vec()
            };
            assert_eq!(run(), run(), "{arch}");
        }
    }

    #[test]
    fn shifting_logits_keeps_argmax() {
        let row = [0.2, 1.4, -0.3];
        let shifted: Vec<f64> = row.iter().map(|v| v + 100.0).collect();
        assert_eq!(argmax(&row), argmax(&shifted));
    }

    #[test]
    fn every_zoo_member_passes_grad_check_at_micro_size() {
        let emb = tiny_embeddings(4);
        let ids = [0u32, 1, 2, 3];
        let target = [1u32];
        for arch in Arch::ZOO {
            let model = build_classifier(arch, &emb, &labels(), micro_hyper(), 5).unwrap();
            let tensors: Vec<crate::numerics::Tensor> = (0..model.params.len())
                .map(|i| model.params.tensor(i).clone())
                .collect();
            let err = grad_check_many(
                |g, vars| {
                    let bound = model.bind_with(g, vars);
                    let logits = model.forward(g, &bound, &ids).unwrap();
                    g.cross_entropy(logits, &target).unwrap()
                },
                &tensors,
                1e-5,
            );
            assert!(err < 1e-4, "{arch}: rel err {err}");
        }
    }
}
