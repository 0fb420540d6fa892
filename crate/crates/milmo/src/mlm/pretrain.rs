//! Pretraining: stream packing, the step loop, and checkpoints.
//!
//! Encoded documents are concatenated per language with an EOS separator
//! and chunked into fixed-length sequences; each step samples a language
//! uniformly, draws a batch, masks it, and applies one optimizer update.
//! Per-step randomness is derived from `(seed, step)`, so resuming from a
//! checkpoint at step `k` continues exactly the trajectory of an
//! uninterrupted run.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bpe::{EOS, PAD};
use crate::corpus::Language;
use crate::numerics::{Adam, AdamConfig, Graph, ParamManifestEntry, ParamSet, Tensor};
use crate::rng::{labeled_seed, Rng};

use super::encoder::MlmModel;
use super::masking::{mask_batch, IdBatch, MaskingPolicy};
use super::{MlmConfig, MlmError};
use crate::bpe::SubwordVocab;

/// One fixed-length training sequence.
#[derive(Debug, Clone)]
pub struct PackedSequence {
    pub ids: Vec<u32>,
    pub lang: Language,
}

/// Concatenate each language's documents with EOS separators and chunk to
/// `max_len`, padding the final partial chunk.
pub fn pack_streams(
    corpus: &BTreeMap<Language, Vec<Vec<u32>>>,
    max_len: usize,
) -> Vec<PackedSequence> {
    let mut packed = Vec::new();
    for (&lang, docs) in corpus {
        let mut stream: Vec<u32> = Vec::new();
        for doc in docs {
            stream.extend_from_slice(doc);
            stream.push(EOS);
        }
        for chunk in stream.chunks(max_len) {
            let mut ids = chunk.to_vec();
            ids.resize(max_len, PAD);
            packed.push(PackedSequence { ids, lang });
        }
    }
    packed
}

/// Step budget and batch shape for pretraining.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PretrainSchedule {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub log_every: u64,
}

impl Default for PretrainSchedule {
    fn default() -> Self {
        PretrainSchedule {
            steps: 300,
            batch_size: 8,
            lr: 1e-3,
            log_every: 10,
        }
    }
}

/// A recorded loss value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: u64,
    pub loss: f64,
}

/// Model, optimizer state and training history in one reloadable unit.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: MlmConfig,
    pub params: ParamSet,
    pub adam: Option<SavedAdam>,
    pub step: u64,
    pub loss_history: Vec<LossPoint>,
}

#[derive(Debug, Clone)]
pub struct SavedAdam {
    pub config: AdamConfig,
    pub step: u64,
    pub moments: ParamSet,
}

const CKPT_MAGIC: &[u8; 8] = b"MILMOCKP";
const CKPT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: MlmConfig,
    step: u64,
    loss_history: Vec<LossPoint>,
    params: Vec<ParamManifestEntry>,
    adam: Option<AdamHeader>,
}

#[derive(Serialize, Deserialize)]
struct AdamHeader {
    config: AdamConfig,
    step: u64,
    moments: Vec<ParamManifestEntry>,
}

impl Checkpoint {
    /// Binary layout: magic, version, little-endian JSON header length, the
    /// JSON header, then raw little-endian f64 payloads (parameters first,
    /// optimizer moments after). Reloading is bit-exact.
    pub fn save(&self, path: &Path) -> Result<(), MlmError> {
        let header = CheckpointHeader {
            config: self.config,
            step: self.step,
            loss_history: self.loss_history.clone(),
            params: self.params.manifest(),
            adam: self.adam.as_ref().map(|a| AdamHeader {
                config: a.config,
                step: a.step,
                moments: a.moments.manifest(),
            }),
        };
        let json = serde_json::to_vec(&header)
            .map_err(|e| MlmError::Config(format!("serialize checkpoint: {e}")))?;
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CKPT_MAGIC)?;
        w.write_all(&CKPT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        self.params.write_payload(&mut w)?;
        if let Some(a) = &self.adam {
            a.moments.write_payload(&mut w)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MlmError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CKPT_MAGIC {
            return Err(MlmError::Corrupt("bad checkpoint magic".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != CKPT_VERSION {
            return Err(MlmError::Corrupt(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let mut len8 = [0u8; 8];
        r.read_exact(&mut len8)?;
        let json_len = u64::from_le_bytes(len8) as usize;
        let mut json = vec![0u8; json_len];
        r.read_exact(&mut json)?;
        let header: CheckpointHeader = serde_json::from_slice(&json)
            .map_err(|e| MlmError::Corrupt(format!("checkpoint header: {e}")))?;
        let params = ParamSet::read_payload(&header.params, &mut r)?;
        let adam = match header.adam {
            Some(a) => Some(SavedAdam {
                config: a.config,
                step: a.step,
                moments: ParamSet::read_payload(&a.moments, &mut r)?,
            }),
            None => None,
        };
        Ok(Checkpoint {
            config: header.config,
            params,
            adam,
            step: header.step,
            loss_history: header.loss_history,
        })
    }
}

/// Append `step<TAB>loss` lines.
pub fn append_metrics(path: &Path, points: &[LossPoint]) -> Result<(), MlmError> {
    let mut w = BufWriter::new(File::options().append(true).create(true).open(path)?);
    for p in points {
        writeln!(w, "{}\t{}", p.step, p.loss)?;
    }
    w.flush()?;
    Ok(())
}

fn batch_for_step(
    packed: &[PackedSequence],
    by_lang: &BTreeMap<Language, Vec<usize>>,
    vocab: &SubwordVocab,
    policy: &MaskingPolicy,
    batch_size: usize,
    seed: u64,
    step: u64,
) -> super::masking::MaskedBatch {
    let mut rng = Rng::new(labeled_seed(seed, &format!("mlm-step-{step}")));
    let langs: Vec<Language> = by_lang.keys().copied().collect();
    let lang = langs[rng.gen_range(langs.len())];
    let pool = &by_lang[&lang];
    let rows: Vec<Vec<u32>> = (0..batch_size)
        .map(|_| packed[pool[rng.gen_range(pool.len())]].ids.clone())
        .collect();
    let ids = IdBatch::from_rows(&rows);
    let lang_ids = vec![lang.index() as u32; batch_size];
    mask_batch(&ids, &lang_ids, policy, vocab, &mut rng)
}

/// Train from scratch. Equivalent to [`resume`] from a fresh checkpoint.
pub fn pretrain(
    corpus: &BTreeMap<Language, Vec<Vec<u32>>>,
    vocab: &SubwordVocab,
    config: MlmConfig,
    policy: &MaskingPolicy,
    schedule: &PretrainSchedule,
) -> Result<Checkpoint, MlmError> {
    let model = MlmModel::new(config)?;
    let start = Checkpoint {
        config,
        params: model.params,
        adam: None,
        step: 0,
        loss_history: Vec::new(),
    };
    resume(start, corpus, vocab, policy, schedule)
}

/// Continue training a checkpoint until `schedule.steps` total steps.
/// Deterministic: step `k` derives its batch, masking and dropout from
/// `(config.seed, k)` alone, so interrupted and uninterrupted runs agree.
pub fn resume(
    checkpoint: Checkpoint,
    corpus: &BTreeMap<Language, Vec<Vec<u32>>>,
    vocab: &SubwordVocab,
    policy: &MaskingPolicy,
    schedule: &PretrainSchedule,
) -> Result<Checkpoint, MlmError> {
    policy.validate()?;
    let config = checkpoint.config;
    let packed = pack_streams(corpus, config.max_len);
    if packed.is_empty() {
        return Err(MlmError::EmptyCorpus);
    }
    let mut by_lang: BTreeMap<Language, Vec<usize>> = BTreeMap::new();
    for (i, seq) in packed.iter().enumerate() {
        by_lang.entry(seq.lang).or_default().push(i);
    }

    let mut model = MlmModel::from_parts(config, checkpoint.params)?;
    let mut adam = match &checkpoint.adam {
        Some(saved) => Adam::restore(saved.config, saved.step, &model.params, &saved.moments)?,
        None => Adam::new(AdamConfig::with_lr(schedule.lr), &model.params),
    };
    let mut history = checkpoint.loss_history;

    for step in checkpoint.step..schedule.steps {
        let batch = batch_for_step(
            &packed,
            &by_lang,
            vocab,
            policy,
            schedule.batch_size,
            config.seed,
            step,
        );
        let mut g = Graph::for_training(labeled_seed(config.seed, &format!("mlm-dropout-{step}")));
        let bound = model.bind(&mut g);
        let loss = match model.mlm_loss(&mut g, &bound, &batch) {
            Ok(loss) => loss,
            // A batch with no masked position has no defined loss; skip it.
            Err(MlmError::Numerics(crate::numerics::NumericsError::UndefinedLoss)) => continue,
            Err(e) => return Err(e),
        };
        let loss_value = g.value(loss).item();
        let grads = g.backward(loss)?;
        let collected: Vec<Option<Tensor>> = bound
            .vars()
            .iter()
            .map(|&v| grads.get(v).cloned())
            .collect();
        adam.step(&mut model.params, &collected)?;

        let done = step + 1;
        if done == 1 || done % schedule.log_every.max(1) == 0 || done == schedule.steps {
            history.push(LossPoint {
                step: done,
                loss: loss_value,
            });
        }
    }

    Ok(Checkpoint {
        config,
        adam: Some(SavedAdam {
            config: adam.config,
            step: adam.step_count(),
            moments: adam.to_params(&model.params),
        }),
        params: model.params,
        step: schedule.steps,
        loss_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bpe::{END_OF_WORD, N_SPECIALS};

    fn toy_vocab(n_subwords: usize) -> SubwordVocab {
        let subwords: Vec<String> = (0..n_subwords).map(|i| format!("s{i}")).collect();
        SubwordVocab::from_subwords(subwords, n_subwords + N_SPECIALS, END_OF_WORD).unwrap()
    }

    fn toy_corpus(vocab_size: u32) -> BTreeMap<Language, Vec<Vec<u32>>> {
        // Cyclic token patterns so masked positions are predictable from
        // context.
        let mut rng = Rng::new(99);
        let mut corpus = BTreeMap::new();
        for lang in [Language::Mongolian, Language::Tibetan] {
            let mut docs = Vec::new();
            for _ in 0..10 {
                let a = N_SPECIALS as u32 + rng.gen_range((vocab_size as usize) - N_SPECIALS) as u32;
                let b = N_SPECIALS as u32 + rng.gen_range((vocab_size as usize) - N_SPECIALS) as u32;
                let doc: Vec<u32> = (0..24).map(|i| if i % 2 == 0 { a } else { b }).collect();
                docs.push(doc);
            }
            corpus.insert(lang, docs);
        }
        corpus
    }

    fn tiny_config(vocab_size: usize) -> MlmConfig {
        MlmConfig {
            emb_dim: 16,
            n_layers: 1,
            n_heads: 2,
            dropout: 0.1,
            n_langs: 5,
            max_len: 16,
            vocab_size,
            ff_mult: 2,
            tie_output: false,
            seed: 5,
        }
    }

    #[test]
    fn packing_chunks_and_pads() {
        let mut corpus = BTreeMap::new();
        corpus.insert(Language::Korean, vec![vec![10, 11, 12], vec![13]]);
        let packed = pack_streams(&corpus, 4);
        // Stream: 10 11 12 EOS 13 EOS -> [10,11,12,EOS], [13,EOS,PAD,PAD]
        assert_eq!(packed.len(), 2);
        assert_eq!(packed[0].ids, vec![10, 11, 12, EOS]);
        assert_eq!(packed[1].ids, vec![13, EOS, PAD, PAD]);
        assert_eq!(packed[0].lang, Language::Korean);
    }

    #[test]
    fn zero_steps_returns_seeded_initialization() {
        let vocab = toy_vocab(45);
        let corpus = toy_corpus(50);
        let config = tiny_config(50);
        let schedule = PretrainSchedule {
            steps: 0,
            ..Default::default()
        };
        let ckpt = pretrain(&corpus, &vocab, config, &MaskingPolicy::default(), &schedule).unwrap();
        let fresh = MlmModel::new(config).unwrap();
        for ((n1, t1), (n2, t2)) in ckpt.params.iter().zip(fresh.params.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1, t2);
        }
        assert_eq!(ckpt.step, 0);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let vocab = toy_vocab(45);
        let corpus = BTreeMap::new();
        let config = tiny_config(50);
        assert!(matches!(
            pretrain(
                &corpus,
                &vocab,
                config,
                &MaskingPolicy::default(),
                &PretrainSchedule::default()
            ),
            Err(MlmError::EmptyCorpus)
        ));
    }

    #[test]
    fn same_seed_same_trajectory() {
        let vocab = toy_vocab(45);
        let corpus = toy_corpus(50);
        let config = tiny_config(50);
        let schedule = PretrainSchedule {
            steps: 4,
            batch_size: 2,
            lr: 1e-3,
            log_every: 1,
        };
        let a = pretrain(&corpus, &vocab, config, &MaskingPolicy::default(), &schedule).unwrap();
        let b = pretrain(&corpus, &vocab, config, &MaskingPolicy::default(), &schedule).unwrap();
        assert_eq!(a.loss_history, b.loss_history);
        for ((_, t1), (_, t2)) in a.params.iter().zip(b.params.iter()) {
            assert_eq!(t1, t2);
        }
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let vocab = toy_vocab(45);
        let corpus = toy_corpus(50);
        let config = tiny_config(50);
        let policy = MaskingPolicy::default();
        let full = PretrainSchedule {
            steps: 6,
            batch_size: 2,
            lr: 1e-3,
            log_every: 1,
        };
        let half = PretrainSchedule { steps: 3, ..full };

        let uninterrupted = pretrain(&corpus, &vocab, config, &policy, &full).unwrap();
        let first_half = pretrain(&corpus, &vocab, config, &policy, &half).unwrap();
        let resumed = resume(first_half, &corpus, &vocab, &policy, &full).unwrap();

        assert_eq!(uninterrupted.loss_history, resumed.loss_history);
        for ((n1, t1), (n2, t2)) in uninterrupted.params.iter().zip(resumed.params.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1, t2, "parameter {n1} diverged after resume");
        }
    }

    #[test]
    fn checkpoint_file_roundtrip_preserves_forward_pass() {
        let vocab = toy_vocab(45);
        let corpus = toy_corpus(50);
        let config = tiny_config(50);
        let schedule = PretrainSchedule {
            steps: 2,
            batch_size: 2,
            lr: 1e-3,
            log_every: 1,
        };
        let ckpt = pretrain(&corpus, &vocab, config, &MaskingPolicy::default(), &schedule).unwrap();

        let dir = std::env::temp_dir().join("milmo-ckpt");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.ckpt");
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();

        assert_eq!(loaded.step, ckpt.step);
        assert_eq!(loaded.loss_history, ckpt.loss_history);
        for ((n1, t1), (n2, t2)) in ckpt.params.iter().zip(loaded.params.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1, t2);
        }

        // Bit-identical forward pass after reload.
        let a = MlmModel::from_parts(ckpt.config, ckpt.params.clone()).unwrap();
        let b = MlmModel::from_parts(loaded.config, loaded.params.clone()).unwrap();
        let batch = batch_for_step(
            &pack_streams(&corpus, config.max_len),
            &{
                let mut m = BTreeMap::new();
                m.insert(Language::Mongolian, vec![0usize]);
                m
            },
            &vocab,
            &MaskingPolicy::default(),
            2,
            7,
            0,
        );
        assert_eq!(a.encode(&batch).unwrap().hidden, b.encode(&batch).unwrap().hidden);
    }

    #[test]
    fn loss_decreases_on_predictable_corpus() {
        let vocab = toy_vocab(45);
        let corpus = toy_corpus(50);
        let config = tiny_config(50);
        let schedule = PretrainSchedule {
            steps: 60,
            batch_size: 4,
            lr: 3e-3,
            log_every: 10,
        };
        let ckpt = pretrain(&corpus, &vocab, config, &MaskingPolicy::default(), &schedule).unwrap();
        let first = ckpt.loss_history.first().unwrap().loss;
        let last = ckpt.loss_history.last().unwrap().loss;
        assert!(last < first, "loss did not decrease: {first} -> {last}");
        assert!(ckpt.params.all_finite());
    }
}
