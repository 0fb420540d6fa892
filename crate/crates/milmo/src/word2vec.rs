//! Skip-gram word embeddings with negative sampling.
//!
//! Each language gets its own vocabulary and embedding table. Training is
//! plain SGD over (center, context) pairs with a dynamic window, negative
//! samples drawn from the unigram distribution raised to 0.75, frequent-word
//! subsampling, and a linearly decaying learning rate. The published vectors
//! are the input (center) embeddings.
//!
//! Embedding files are text: a `V d` header line, then one `word v1 .. vd`
//! line per word.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::numerics::Tensor;
use crate::rng::Rng;
use crate::segment::TokenSequence;

#[derive(Debug, Error)]
pub enum Word2VecError {
    #[error("empty corpus: no tokens survive the frequency threshold")]
    EmptyCorpus,
    #[error("unknown word {0:?}")]
    UnknownWord(String),
    #[error("malformed embedding file at line {0}")]
    Malformed(usize),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-language word inventory with frequencies. Ids are assigned by
/// descending frequency, ties broken lexicographically.
#[derive(Debug, Clone)]
pub struct WordVocab {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
    pub min_count: u64,
    total_tokens: u64,
}

impl WordVocab {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    /// Map a token stream to ids, dropping words below the threshold.
    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().filter_map(|t| self.id(t)).collect()
    }
}

/// Count words in `seqs` and keep those with frequency at least `min_count`.
pub fn build_word_vocab(
    seqs: &[TokenSequence],
    min_count: u64,
) -> Result<WordVocab, Word2VecError> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    let mut total = 0u64;
    for seq in seqs {
        for token in &seq.tokens {
            *counts.entry(token.as_str()).or_insert(0) += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Word2VecError::EmptyCorpus);
    }
    let mut entries: Vec<(&str, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .collect();
    if entries.is_empty() {
        return Err(Word2VecError::EmptyCorpus);
    }
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut vocab = WordVocab {
        words: Vec::with_capacity(entries.len()),
        counts: Vec::with_capacity(entries.len()),
        index: HashMap::with_capacity(entries.len()),
        min_count,
        total_tokens: total,
    };
    for (word, count) in entries {
        let id = vocab.words.len() as u32;
        vocab.words.push(word.to_string());
        vocab.counts.push(count);
        vocab.index.insert(word.to_string(), id);
    }
    Ok(vocab)
}

/// Skip-gram hyperparameters. The embedding dimension defaults to 300;
/// everything is configurable.
#[derive(Debug, Clone, Copy)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    pub subsample: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 300,
            window: 5,
            negatives: 5,
            epochs: 5,
            initial_lr: 0.025,
            subsample: 1e-4,
            seed: 1,
        }
    }
}

/// Input (center) and output (context) vectors. Similarity queries use the
/// input table.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub input: Tensor,
    pub output: Tensor,
    pub dim: usize,
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl EmbeddingTable {
    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn vector(&self, id: u32) -> &[f64] {
        self.input.row(id as usize)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    /// Write the text format: `V d` header, then one word per line.
    pub fn save(&self, path: &Path) -> Result<(), Word2VecError> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{} {}", self.vocab_size(), self.dim)?;
        for (i, word) in self.words.iter().enumerate() {
            write!(w, "{word}")?;
            for v in self.input.row(i) {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read the text format written by [`EmbeddingTable::save`].
    pub fn load(path: &Path) -> Result<Self, Word2VecError> {
        let mut lines = BufReader::new(File::open(path)?).lines();
        let header = lines
            .next()
            .ok_or(Word2VecError::Malformed(1))?
            .map_err(Word2VecError::Io)?;
        let mut parts = header.split_whitespace();
        let v: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or(Word2VecError::Malformed(1))?;
        let d: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or(Word2VecError::Malformed(1))?;
        let mut words = Vec::with_capacity(v);
        let mut index = HashMap::with_capacity(v);
        let mut data = Vec::with_capacity(v * d);
        for (line_no, line) in lines.enumerate() {
            let line = line.map_err(Word2VecError::Io)?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let word = parts.next().ok_or(Word2VecError::Malformed(line_no + 2))?;
            index.insert(word.to_string(), words.len() as u32);
            words.push(word.to_string());
            let mut n = 0;
            for p in parts {
                let val: f64 = p.parse().map_err(|_| Word2VecError::Malformed(line_no + 2))?;
                data.push(val);
                n += 1;
            }
            if n != d {
                return Err(Word2VecError::Malformed(line_no + 2));
            }
        }
        if words.len() != v {
            return Err(Word2VecError::Malformed(words.len() + 1));
        }
        let input = Tensor::from_vec(&[v, d], data).map_err(|_| Word2VecError::Malformed(1))?;
        Ok(EmbeddingTable {
            output: Tensor::zeros(&[v, d]),
            input,
            dim: d,
            words,
            index,
        })
    }
}

/// Skip-gram pairs for one sequence: for each position a window size `b` is
/// drawn uniformly from `[1, window]` and contexts at offsets `±1..=±b`
/// (clipped to the sequence) are emitted.
pub fn generate_pairs(ids: &[u32], window: usize, rng: &mut Rng) -> Vec<(u32, u32)> {
    let mut pairs = Vec::new();
    for (i, &center) in ids.iter().enumerate() {
        let b = 1 + rng.gen_range(window);
        let lo = i.saturating_sub(b);
        let hi = (i + b).min(ids.len().saturating_sub(1));
        for j in lo..=hi {
            if j != i {
                pairs.push((center, ids[j]));
            }
        }
    }
    pairs
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Negative-sampling objective for one center vector against labeled
/// targets (label 1.0 for the true context, 0.0 for noise words):
/// `-log σ(u·v)` for positives plus `-log σ(-u·v)` for negatives.
pub fn sgns_loss(center: &[f64], targets: &[(&[f64], f64)]) -> f64 {
    let mut loss = 0.0;
    for (u, label) in targets {
        let z = dot(u, center);
        loss -= if *label > 0.5 {
            sigmoid(z).max(f64::MIN_POSITIVE).ln()
        } else {
            sigmoid(-z).max(f64::MIN_POSITIVE).ln()
        };
    }
    loss
}

/// Analytic gradients of [`sgns_loss`]: `dL/dz = σ(u·v) − label` for each
/// target, giving `dv = Σ (σ−label)·u` and `du = (σ−label)·v`.
pub fn sgns_grads(center: &[f64], targets: &[(&[f64], f64)]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut grad_center = vec![0.0; center.len()];
    let mut grad_targets = Vec::with_capacity(targets.len());
    for (u, label) in targets {
        let g = sigmoid(dot(u, center)) - label;
        for (gc, uv) in grad_center.iter_mut().zip(*u) {
            *gc += g * uv;
        }
        grad_targets.push(center.iter().map(|&cv| g * cv).collect());
    }
    (grad_center, grad_targets)
}

/// Cumulative noise distribution over `counts^0.75`.
struct NoiseTable {
    cumulative: Vec<f64>,
}

impl NoiseTable {
    fn new(vocab: &WordVocab) -> Self {
        let mut cumulative = Vec::with_capacity(vocab.len());
        let mut acc = 0.0;
        for id in 0..vocab.len() as u32 {
            acc += (vocab.count(id) as f64).powf(0.75);
            cumulative.push(acc);
        }
        NoiseTable { cumulative }
    }

    fn sample(&self, rng: &mut Rng) -> u32 {
        let target = rng.gen_f64() * self.cumulative.last().copied().unwrap_or(1.0);
        self.cumulative.partition_point(|&c| c <= target) as u32
    }
}

/// Train skip-gram embeddings. Deterministic given `config.seed`.
pub fn train_skipgram(
    seqs: &[TokenSequence],
    vocab: &WordVocab,
    config: &SkipGramConfig,
) -> Result<EmbeddingTable, Word2VecError> {
    let v = vocab.len();
    let d = config.dim;
    let mut rng = Rng::new(config.seed);

    // Classic init: inputs uniform in [-0.5/d, 0.5/d], outputs zero.
    let mut input: Vec<f64> = (0..v * d)
        .map(|_| (rng.gen_f64() - 0.5) / d as f64)
        .collect();
    let mut output = vec![0.0f64; v * d];

    let noise = NoiseTable::new(vocab);
    let encoded: Vec<Vec<u32>> = seqs.iter().map(|s| vocab.encode(&s.tokens)).collect();
    let tokens_per_epoch: usize = encoded.iter().map(Vec::len).sum();
    let schedule_total = (tokens_per_epoch * config.epochs.max(1)) as f64;
    let min_lr = config.initial_lr * 1e-4;

    let mut processed = 0usize;
    let mut grad_center = vec![0.0f64; d];
    for _epoch in 0..config.epochs {
        for ids in &encoded {
            // Frequent-word subsampling: keep word w with probability
            // (sqrt(f/t) + 1) * t/f where f is the corpus frequency.
            let kept: Vec<u32> = ids
                .iter()
                .copied()
                .filter(|&id| {
                    processed += 1;
                    if config.subsample <= 0.0 {
                        return true;
                    }
                    let f = vocab.count(id) as f64 / vocab.total_tokens() as f64;
                    let keep = ((f / config.subsample).sqrt() + 1.0) * config.subsample / f;
                    keep >= 1.0 || rng.gen_f64() < keep
                })
                .collect();

            let lr_now = {
                let frac = 1.0 - processed as f64 / schedule_total;
                (config.initial_lr * frac).max(min_lr)
            };

            for (i, &center) in kept.iter().enumerate() {
                let b = 1 + rng.gen_range(config.window);
                let lo = i.saturating_sub(b);
                let hi = (i + b).min(kept.len() - 1);
                for j in lo..=hi {
                    if j == i {
                        continue;
                    }
                    let context = kept[j];
                    grad_center.iter_mut().for_each(|g| *g = 0.0);
                    let crow = center as usize * d;
                    // Positive target plus `negatives` noise words; a noise
                    // draw equal to the true context is skipped.
                    for k in 0..=config.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0)
                        } else {
                            let n = noise.sample(&mut rng);
                            if n == context {
                                continue;
                            }
                            (n, 0.0)
                        };
                        let trow = target as usize * d;
                        let z = dot(&output[trow..trow + d], &input[crow..crow + d]);
                        let g = sigmoid(z) - label;
                        for x in 0..d {
                            grad_center[x] += g * output[trow + x];
                            output[trow + x] -= lr_now * g * input[crow + x];
                        }
                    }
                    for x in 0..d {
                        input[crow + x] -= lr_now * grad_center[x];
                    }
                }
            }
        }
    }

    Ok(EmbeddingTable {
        input: Tensor::from_vec(&[v, d], input).expect("consistent shape"),
        output: Tensor::from_vec(&[v, d], output).expect("consistent shape"),
        dim: d,
        words: vocab.words.clone(),
        index: vocab.index.clone(),
    })
}

/// Cosine similarity; zero vectors compare as 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (dot(a, a).sqrt(), dot(b, b).sqrt());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// Top-`k` neighbors of `word` by cosine over input vectors, excluding the
/// query itself; ties break lexicographically.
pub fn nearest_neighbors(
    word: &str,
    k: usize,
    table: &EmbeddingTable,
) -> Result<Vec<(String, f64)>, Word2VecError> {
    let id = table
        .id(word)
        .ok_or_else(|| Word2VecError::UnknownWord(word.to_string()))?;
    let query = table.vector(id);
    let mut scored: Vec<(String, f64)> = (0..table.vocab_size() as u32)
        .filter(|&other| other != id)
        .map(|other| {
            (
                table.word(other).to_string(),
                cosine(query, table.vector(other)),
            )
        })
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    scored.truncate(k);
    Ok(scored)
}
