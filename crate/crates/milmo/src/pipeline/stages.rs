//! Stage execution over the data directory.
//!
//! Stages form an acyclic chain: clean → segment → split → balance →
//! bpe-train → bpe-encode → {w2v-train, mlm-pretrain} → {clf-train,
//! finetune} → evaluate → report. Each stage reads its upstream artifacts,
//! writes its outputs under the data root, and records them in the
//! manifest; running a stage whose dependencies have not run fails with a
//! dependency error.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::json;

use crate::bpe;
use crate::classify::{
    self, build_classifier, evaluate, fine_tune, train_classifier, Arch, FineTuneSchedule,
    Pooling, Prediction, TrainSchedule, ZooHyper,
};
use crate::corpus::{
    self, balance_dataset, clean_document, split_corpus, BalanceStrategy, DatasetRecord,
    LabeledExample, Language, RawDocument,
};
use crate::mlm::{self, MaskingPolicy, MlmConfig, PretrainSchedule};
use crate::rng::labeled_seed;
use crate::segment::{segment, Granularity, MorphemeLexicon, TokenSequence};
use crate::word2vec::{build_word_vocab, train_skipgram, EmbeddingTable, SkipGramConfig};

use super::config::PipelineConfig;
use super::manifest::{params_hash, Manifest};
use super::mini_corpus;
use super::PipelineError;

/// Canonical stage order; `run-all` executes exactly this sequence.
pub const STAGE_ORDER: [&str; 12] = [
    "clean",
    "segment",
    "split",
    "balance",
    "bpe-train",
    "bpe-encode",
    "w2v-train",
    "mlm-pretrain",
    "clf-train",
    "finetune",
    "evaluate",
    "report",
];

fn dependencies(stage: &str) -> &'static [&'static str] {
    match stage {
        "clean" => &[],
        "segment" => &["clean"],
        "split" => &["segment"],
        "balance" => &["split"],
        "bpe-train" => &["split"],
        "bpe-encode" => &["bpe-train"],
        "w2v-train" => &["split"],
        "mlm-pretrain" => &["bpe-encode"],
        "clf-train" => &["w2v-train", "balance"],
        "finetune" => &["mlm-pretrain", "balance"],
        "evaluate" => &["clf-train", "finetune"],
        "report" => &["evaluate"],
        _ => &[],
    }
}

fn stage_seq(stage: &str) -> usize {
    STAGE_ORDER.iter().position(|&s| s == stage).unwrap_or(0)
}

/// Run one named stage. Returns the data-root-relative paths it wrote.
pub fn run_stage(stage: &str, config: &PipelineConfig) -> Result<Vec<String>, PipelineError> {
    if !STAGE_ORDER.contains(&stage) {
        return Err(PipelineError::Config(format!(
            "unknown stage {stage:?} (expected one of {})",
            STAGE_ORDER.join("|")
        )));
    }
    std::fs::create_dir_all(&config.data_dir)
        .map_err(|e| PipelineError::Data(format!("create data dir: {e}")))?;
    let mut manifest = Manifest::load_or_new(&config.data_dir, config.seed);
    for dep in dependencies(stage) {
        if !manifest.satisfied(&config.data_dir, dep) {
            return Err(PipelineError::StageDependency {
                stage: stage.to_string(),
                missing: dep.to_string(),
            });
        }
    }
    let (outputs, hash) = match stage {
        "clean" => stage_clean(config)?,
        "segment" => stage_segment(config)?,
        "split" => stage_split(config)?,
        "balance" => stage_balance(config)?,
        "bpe-train" => stage_bpe_train(config)?,
        "bpe-encode" => stage_bpe_encode(config)?,
        "w2v-train" => stage_w2v_train(config)?,
        "mlm-pretrain" => stage_mlm_pretrain(config)?,
        "clf-train" => stage_clf_train(config)?,
        "finetune" => stage_finetune(config)?,
        "evaluate" => stage_evaluate(config)?,
        "report" => stage_report(config)?,
        _ => unreachable!(),
    };
    manifest.record(&config.data_dir, stage, stage_seq(stage), hash, &outputs)?;
    manifest.save(&config.data_dir)?;
    Ok(outputs)
}

/// Run every stage in order on the configured data root, reporting
/// progress on stderr.
pub fn run_all(config: &PipelineConfig) -> Result<(), PipelineError> {
    for stage in STAGE_ORDER {
        let started = std::time::Instant::now();
        run_stage(stage, config)?;
        eprintln!("{stage:<13} done in {:.1}s", started.elapsed().as_secs_f64());
    }
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| PipelineError::Data(format!("create {}: {e}", parent.display())))?;
    }
    Ok(())
}

type StageResult = Result<(Vec<String>, String), PipelineError>;

// ---------------------------------------------------------------- clean --

fn stage_clean(config: &PipelineConfig) -> StageResult {
    let raw_path = config.path(&config.corpus.raw_file);
    if !raw_path.exists() {
        if !config.corpus.generate {
            return Err(PipelineError::Data(format!(
                "raw corpus {} does not exist and [corpus] generate = false",
                raw_path.display()
            )));
        }
        let records = mini_corpus::generate(
            config.corpus.docs_per_lang,
            &config.corpus.classes,
            labeled_seed(config.seed, "corpus"),
        );
        ensure_parent(&raw_path)?;
        corpus::write_records(&raw_path, &records)?;
        // The Korean lexicon matching the generated morphemes.
        let lex_path = config.path(&config.segment.korean_lexicon);
        ensure_parent(&lex_path)?;
        let entries = mini_corpus::korean_lexicon(
            config.corpus.classes.len(),
            labeled_seed(config.seed, "corpus"),
        );
        std::fs::write(&lex_path, entries.join("\n") + "\n")
            .map_err(|e| PipelineError::Data(format!("write lexicon: {e}")))?;
    }
    // The recorded output list is the same whether this run generated the
    // corpus or found it in place, so reruns keep the manifest stable.
    let mut outputs = vec![config.corpus.raw_file.clone()];
    if config.path(&config.segment.korean_lexicon).exists() {
        outputs.push(config.segment.korean_lexicon.clone());
    }

    let records = corpus::load_records(&raw_path)?;
    let mut cleaned = Vec::new();
    let mut rejections = Vec::new();
    for (i, rec) in records.into_iter().enumerate() {
        let raw = RawDocument {
            text: rec.text,
            lang: rec.lang,
            source_id: rec
                .source_id
                .unwrap_or_else(|| format!("line-{}", i + 1)),
        };
        match clean_document(&raw, config.corpus.min_length) {
            Ok(clean) => cleaned.push(DatasetRecord {
                text: clean.text,
                label: rec.label,
                lang: clean.lang,
                source_id: Some(raw.source_id),
                tokens: None,
            }),
            Err(rejection) => rejections.push(rejection),
        }
    }
    corpus::write_records(&config.path("clean.jsonl"), &cleaned)?;
    corpus::write_rejection_log(&config.path("rejected.tsv"), &rejections)?;
    outputs.push("clean.jsonl".into());
    outputs.push("rejected.tsv".into());
    let hash = params_hash(config.seed, &config.corpus);
    Ok((outputs, hash))
}

// -------------------------------------------------------------- segment --

fn load_lexicon_if(path: &str, config: &PipelineConfig) -> Result<Option<MorphemeLexicon>, PipelineError> {
    if path.is_empty() {
        return Ok(None);
    }
    let full = config.path(path);
    if !full.exists() {
        return Err(PipelineError::Data(format!(
            "lexicon {} not found",
            full.display()
        )));
    }
    Ok(Some(MorphemeLexicon::load(&full)?))
}

fn stage_segment(config: &PipelineConfig) -> StageResult {
    let tibetan_granularity = match config.segment.tibetan.as_str() {
        "syllable" => Granularity::Syllable,
        "word" => Granularity::Word,
        other => {
            return Err(PipelineError::Config(format!(
                "[segment] tibetan must be syllable|word, got {other:?}"
            )))
        }
    };
    let korean_lexicon = load_lexicon_if(&config.segment.korean_lexicon, config)?;
    let tibetan_lexicon = load_lexicon_if(&config.segment.tibetan_lexicon, config)?;

    let records = corpus::load_records(&config.path("clean.jsonl"))?;
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        let (granularity, lexicon) = match rec.lang {
            Language::Tibetan => (tibetan_granularity, tibetan_lexicon.as_ref()),
            Language::Korean => (Granularity::Morpheme, korean_lexicon.as_ref()),
            _ => (Granularity::Word, None),
        };
        let seq = segment(&rec.text, rec.lang, granularity, lexicon)
            .map_err(|e| PipelineError::Data(e.to_string()))?;
        out.push(DatasetRecord {
            tokens: Some(seq.tokens),
            ..rec
        });
    }
    corpus::write_records(&config.path("segmented.jsonl"), &out)?;
    let hash = params_hash(config.seed, &config.segment);
    Ok((vec!["segmented.jsonl".into()], hash))
}

// ---------------------------------------------------------------- split --

const SPLITS: [&str; 3] = ["train", "valid", "test"];

fn split_file(name: &str) -> String {
    format!("splits/{name}.jsonl")
}

fn stage_split(config: &PipelineConfig) -> StageResult {
    let records = corpus::load_records(&config.path("segmented.jsonl"))?;
    let mut train = Vec::new();
    let mut valid = Vec::new();
    let mut test = Vec::new();
    // Per-language 8:1:1 so every language is represented in each split.
    for lang in Language::ALL {
        let of_lang: Vec<DatasetRecord> = records
            .iter()
            .filter(|r| r.lang == lang)
            .cloned()
            .collect();
        let seed = labeled_seed(config.seed, &format!("split-{}", lang.code()));
        let split = split_corpus(&of_lang, seed);
        train.extend(split.train);
        valid.extend(split.valid);
        test.extend(split.test);
    }
    ensure_parent(&config.path(&split_file("train")))?;
    corpus::write_records(&config.path(&split_file("train")), &train)?;
    corpus::write_records(&config.path(&split_file("valid")), &valid)?;
    corpus::write_records(&config.path(&split_file("test")), &test)?;
    let hash = params_hash(config.seed, &json!({ "ratio": "8:1:1" }));
    Ok((SPLITS.iter().map(|s| split_file(s)).collect(), hash))
}

// -------------------------------------------------------------- balance --

fn stage_balance(config: &PipelineConfig) -> StageResult {
    let records = corpus::load_records(&config.path(&split_file("train")))?;
    let mut balanced = Vec::new();
    for lang in Language::ALL {
        let of_lang: Vec<DatasetRecord> = records
            .iter()
            .filter(|r| r.lang == lang && r.label.is_some())
            .cloned()
            .collect();
        if of_lang.is_empty() {
            continue;
        }
        let examples: Vec<LabeledExample> = of_lang
            .iter()
            .map(|r| LabeledExample {
                text: r.text.clone(),
                label: r.label.clone().expect("filtered above"),
                lang: r.lang,
            })
            .collect();
        let seed = labeled_seed(config.seed, &format!("balance-{}", lang.code()));
        let kept = balance_dataset(&examples, BalanceStrategy::DownsampleToMin, seed)?;
        // Recover the full records (with tokens) for the kept examples.
        let mut remaining: Vec<DatasetRecord> = of_lang;
        for ex in kept {
            if let Some(pos) = remaining
                .iter()
                .position(|r| r.text == ex.text && r.label.as_deref() == Some(&ex.label))
            {
                balanced.push(remaining.swap_remove(pos));
            }
        }
    }
    balanced.sort_by(|a, b| a.source_id.cmp(&b.source_id));
    ensure_parent(&config.path("balanced/train.jsonl"))?;
    corpus::write_records(&config.path("balanced/train.jsonl"), &balanced)?;
    let hash = params_hash(config.seed, &json!({ "strategy": "downsample_to_min" }));
    Ok((vec!["balanced/train.jsonl".into()], hash))
}

// ------------------------------------------------------------ bpe-train --

fn tokens_of(records: &[DatasetRecord]) -> Result<Vec<TokenSequence>, PipelineError> {
    records
        .iter()
        .map(|r| {
            let tokens = r.tokens.clone().ok_or_else(|| {
                PipelineError::Data(format!(
                    "record {:?} has no tokens; run the segment stage first",
                    r.source_id
                ))
            })?;
            Ok(TokenSequence {
                tokens,
                lang: r.lang,
                granularity: Granularity::Word,
            })
        })
        .collect()
}

fn stage_bpe_train(config: &PipelineConfig) -> StageResult {
    let records = corpus::load_records(&config.path(&split_file("train")))?;
    let seqs = tokens_of(&records)?;
    let words = bpe::WordFrequencyTable::from_sequences(&seqs);
    let (merges, vocab) = bpe::train_bpe(
        &words,
        config.bpe.target_vocab,
        &config.bpe.end_of_word_marker,
    )?;
    ensure_parent(&config.path("bpe/merges.txt"))?;
    bpe::save_merges(&config.path("bpe/merges.txt"), &merges)?;
    vocab.save(&config.path("bpe/vocab.txt"))?;
    let hash = params_hash(config.seed, &config.bpe);
    Ok((vec!["bpe/merges.txt".into(), "bpe/vocab.txt".into()], hash))
}

fn load_bpe(config: &PipelineConfig) -> Result<(Vec<bpe::Merge>, bpe::SubwordVocab), PipelineError> {
    let merges = bpe::load_merges(&config.path("bpe/merges.txt"))?;
    let vocab = bpe::SubwordVocab::load(
        &config.path("bpe/vocab.txt"),
        &config.bpe.end_of_word_marker,
    )?;
    Ok((merges, vocab))
}

// ----------------------------------------------------------- bpe-encode --

#[derive(serde::Serialize, serde::Deserialize)]
struct EncodedRecord {
    lang: String,
    ids: Vec<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    source_id: Option<String>,
}

fn encoded_file(split: &str) -> String {
    format!("encoded/{split}.jsonl")
}

fn write_encoded(path: &Path, rows: &[EncodedRecord]) -> Result<(), PipelineError> {
    use std::io::Write;
    ensure_parent(path)?;
    let mut w = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| PipelineError::Data(e.to_string()))?,
    );
    for row in rows {
        let line = serde_json::to_string(row).map_err(|e| PipelineError::Data(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| PipelineError::Data(e.to_string()))?;
    }
    Ok(())
}

fn read_encoded(path: &Path) -> Result<Vec<EncodedRecord>, PipelineError> {
    let content =
        std::fs::read_to_string(path).map_err(|e| PipelineError::Data(e.to_string()))?;
    content
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| PipelineError::Data(e.to_string())))
        .collect()
}

fn stage_bpe_encode(config: &PipelineConfig) -> StageResult {
    let (merges, vocab) = load_bpe(config)?;
    let mut outputs = Vec::new();
    let mut train_seqs = Vec::new();
    for split in SPLITS {
        let records = corpus::load_records(&config.path(&split_file(split)))?;
        let seqs = tokens_of(&records)?;
        let encoded = bpe::encode_corpus(&seqs, &merges, &vocab);
        let rows: Vec<EncodedRecord> = records
            .iter()
            .zip(encoded)
            .map(|(rec, ids)| EncodedRecord {
                lang: rec.lang.code().to_string(),
                ids,
                label: rec.label.clone(),
                source_id: rec.source_id.clone(),
            })
            .collect();
        write_encoded(&config.path(&encoded_file(split)), &rows)?;
        outputs.push(encoded_file(split));
        if split == "train" {
            train_seqs = seqs;
        }
    }
    let report = bpe::coverage(&vocab, &merges, &train_seqs);
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| PipelineError::Data(e.to_string()))?;
    std::fs::write(config.path("bpe/coverage.json"), json + "\n")
        .map_err(|e| PipelineError::Data(e.to_string()))?;
    outputs.push("bpe/coverage.json".into());
    let hash = params_hash(config.seed, &json!({ "coverage_on": "train" }));
    Ok((outputs, hash))
}

// ------------------------------------------------------------ w2v-train --

fn embedding_file(lang: Language) -> String {
    format!("embeddings/{}.vec", lang.code())
}

fn stage_w2v_train(config: &PipelineConfig) -> StageResult {
    let records = corpus::load_records(&config.path(&split_file("train")))?;
    let mut outputs = Vec::new();
    for lang in Language::ALL {
        let of_lang: Vec<DatasetRecord> = records
            .iter()
            .filter(|r| r.lang == lang)
            .cloned()
            .collect();
        if of_lang.is_empty() {
            continue;
        }
        let seqs = tokens_of(&of_lang)?;
        let vocab = build_word_vocab(&seqs, config.word2vec.min_count)
            .map_err(|e| PipelineError::Data(e.to_string()))?;
        let sg = SkipGramConfig {
            dim: config.word2vec.dim,
            window: config.word2vec.window,
            negatives: config.word2vec.negatives,
            epochs: config.word2vec.epochs,
            initial_lr: config.word2vec.initial_lr,
            subsample: config.word2vec.subsample,
            seed: labeled_seed(config.seed, &format!("w2v-{}", lang.code())),
        };
        let table = train_skipgram(&seqs, &vocab, &sg)
            .map_err(|e| PipelineError::Data(e.to_string()))?;
        let rel = embedding_file(lang);
        ensure_parent(&config.path(&rel))?;
        table
            .save(&config.path(&rel))
            .map_err(|e| PipelineError::Data(e.to_string()))?;
        outputs.push(rel);
    }
    let hash = params_hash(config.seed, &config.word2vec);
    Ok((outputs, hash))
}

// ---------------------------------------------------------- mlm-pretrain --

fn assemble_mlm_config(config: &PipelineConfig, vocab_size: usize) -> MlmConfig {
    MlmConfig {
        emb_dim: config.mlm.emb_dim,
        n_layers: config.mlm.n_layers,
        n_heads: config.mlm.n_heads,
        dropout: config.mlm.dropout,
        n_langs: config.mlm.n_langs,
        max_len: config.mlm.max_len,
        vocab_size: if config.mlm.vocab_size == 0 {
            vocab_size
        } else {
            config.mlm.vocab_size
        },
        ff_mult: config.mlm.ff_mult,
        tie_output: config.mlm.tie_output,
        seed: labeled_seed(config.seed, "mlm"),
    }
}

fn stage_mlm_pretrain(config: &PipelineConfig) -> StageResult {
    let (_, vocab) = load_bpe(config)?;
    let rows = read_encoded(&config.path(&encoded_file("train")))?;
    let mut corpus_by_lang: BTreeMap<Language, Vec<Vec<u32>>> = BTreeMap::new();
    for row in rows {
        let lang: Language = row
            .lang
            .parse()
            .map_err(|e: corpus::CorpusError| PipelineError::Data(e.to_string()))?;
        corpus_by_lang.entry(lang).or_default().push(row.ids);
    }
    let mlm_config = assemble_mlm_config(config, vocab.len());
    let schedule = PretrainSchedule {
        steps: config.mlm.steps,
        batch_size: config.mlm.batch_size,
        lr: config.mlm.lr,
        log_every: config.mlm.log_every,
    };
    let ckpt = mlm::pretrain(
        &corpus_by_lang,
        &vocab,
        mlm_config,
        &MaskingPolicy::default(),
        &schedule,
    )?;
    ensure_parent(&config.path("mlm/checkpoint.ckpt"))?;
    ckpt.save(&config.path("mlm/checkpoint.ckpt"))?;
    let metrics_path = config.path("mlm/metrics.tsv");
    // Rewrite rather than append so reruns stay deterministic.
    if metrics_path.exists() {
        std::fs::remove_file(&metrics_path).map_err(|e| PipelineError::Data(e.to_string()))?;
    }
    mlm::append_metrics(&metrics_path, &ckpt.loss_history)?;
    let hash = params_hash(config.seed, &config.mlm);
    Ok((
        vec!["mlm/checkpoint.ckpt".into(), "mlm/metrics.tsv".into()],
        hash,
    ))
}

// ------------------------------------------------------------- clf-train --

fn label_set(records: &[DatasetRecord]) -> Vec<String> {
    let mut labels: Vec<String> = records
        .iter()
        .filter_map(|r| r.label.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    labels.sort();
    labels
}

fn predictions_file(arch: &str, lang: Language) -> String {
    format!("predictions/{arch}.{}.tsv", lang.code())
}

/// Encode labeled records against a word-embedding vocabulary.
fn encode_for_zoo(
    records: &[DatasetRecord],
    table: &EmbeddingTable,
    labels: &[String],
    max_tokens: usize,
) -> Vec<(Vec<u32>, usize, String)> {
    records
        .iter()
        .filter_map(|r| {
            let label = r.label.as_ref()?;
            let label_idx = labels.iter().position(|l| l == label)?;
            let tokens = r.tokens.as_ref()?;
            let ids: Vec<u32> = tokens
                .iter()
                .filter_map(|t| table.id(t))
                .take(max_tokens)
                .collect();
            let id = r.source_id.clone().unwrap_or_default();
            Some((ids, label_idx, id))
        })
        .collect()
}

fn stage_clf_train(config: &PipelineConfig) -> StageResult {
    let train_records = corpus::load_records(&config.path("balanced/train.jsonl"))?;
    let valid_records = corpus::load_records(&config.path(&split_file("valid")))?;
    let test_records = corpus::load_records(&config.path(&split_file("test")))?;
    let labels = label_set(&train_records);
    if labels.len() < 2 {
        return Err(PipelineError::Data(
            "classification needs at least two labels in the balanced train set".into(),
        ));
    }
    let mut outputs = Vec::new();
    for lang in Language::ALL {
        let emb_path = config.path(&embedding_file(lang));
        if !emb_path.exists() {
            continue;
        }
        let table = EmbeddingTable::load(&emb_path)
            .map_err(|e| PipelineError::Data(e.to_string()))?;
        let train: Vec<_> = train_records
            .iter()
            .filter(|r| r.lang == lang)
            .cloned()
            .collect();
        let valid: Vec<_> = valid_records
            .iter()
            .filter(|r| r.lang == lang)
            .cloned()
            .collect();
        let test: Vec<_> = test_records
            .iter()
            .filter(|r| r.lang == lang)
            .cloned()
            .collect();
        if train.is_empty() || test.is_empty() {
            continue;
        }
        let max_tokens = config.classify.max_tokens;
        let train_enc = encode_for_zoo(&train, &table, &labels, max_tokens);
        let valid_enc = encode_for_zoo(&valid, &table, &labels, max_tokens);
        let test_enc = encode_for_zoo(&test, &table, &labels, max_tokens);
        let train_xy: Vec<_> = train_enc.iter().map(|(x, y, _)| (x.clone(), *y)).collect();
        let valid_xy: Vec<_> = valid_enc.iter().map(|(x, y, _)| (x.clone(), *y)).collect();

        for arch_name in &config.classify.archs {
            let arch = Arch::parse(arch_name).map_err(|e| PipelineError::Config(e.to_string()))?;
            let seed = labeled_seed(config.seed, &format!("clf-{arch_name}-{}", lang.code()));
            let mut model = build_classifier(arch, &table, &labels, ZooHyper::small(), seed)
                .map_err(|e| PipelineError::Data(e.to_string()))?;
            let schedule = TrainSchedule {
                epochs: config.classify.epochs,
                batch_size: config.classify.batch_size,
                lr: config.classify.lr,
                seed,
            };
            train_classifier(&mut model, &train_xy, &valid_xy, &schedule)
                .map_err(|e| PipelineError::Data(e.to_string()))?;
            let mut predictions = Vec::with_capacity(test_enc.len());
            for (ids, gold_idx, example_id) in &test_enc {
                let pred = model
                    .predict(ids)
                    .map_err(|e| PipelineError::Data(e.to_string()))?;
                predictions.push(Prediction {
                    example_id: example_id.clone(),
                    gold: labels[*gold_idx].clone(),
                    pred: labels[pred].clone(),
                });
            }
            let rel = predictions_file(arch.name(), lang);
            ensure_parent(&config.path(&rel))?;
            classify::write_predictions(&config.path(&rel), &predictions)
                .map_err(|e| PipelineError::Data(e.to_string()))?;
            outputs.push(rel);
        }
    }
    let hash = params_hash(config.seed, &config.classify);
    Ok((outputs, hash))
}

// -------------------------------------------------------------- finetune --

fn encode_for_finetune(
    records: &[DatasetRecord],
    merges: &[bpe::Merge],
    vocab: &bpe::SubwordVocab,
    labels: &[String],
    max_tokens: usize,
) -> Vec<(Vec<u32>, usize, String)> {
    let seqs: Vec<TokenSequence> = records
        .iter()
        .map(|r| TokenSequence {
            tokens: r.tokens.clone().unwrap_or_default(),
            lang: r.lang,
            granularity: Granularity::Word,
        })
        .collect();
    let encoded = bpe::encode_corpus(&seqs, merges, vocab);
    records
        .iter()
        .zip(encoded)
        .filter_map(|(r, mut ids)| {
            let label = r.label.as_ref()?;
            let label_idx = labels.iter().position(|l| l == label)?;
            ids.truncate(max_tokens);
            Some((ids, label_idx, r.source_id.clone().unwrap_or_default()))
        })
        .collect()
}

fn stage_finetune(config: &PipelineConfig) -> StageResult {
    let ckpt = mlm::Checkpoint::load(&config.path("mlm/checkpoint.ckpt"))?;
    let (merges, vocab) = load_bpe(config)?;
    let train_records = corpus::load_records(&config.path("balanced/train.jsonl"))?;
    let valid_records = corpus::load_records(&config.path(&split_file("valid")))?;
    let test_records = corpus::load_records(&config.path(&split_file("test")))?;
    let labels = label_set(&train_records);
    let pooling = Pooling::parse(&config.classify.pooling)
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let mut outputs = Vec::new();
    for lang in Language::ALL {
        let train: Vec<_> = train_records
            .iter()
            .filter(|r| r.lang == lang)
            .cloned()
            .collect();
        let valid: Vec<_> = valid_records
            .iter()
            .filter(|r| r.lang == lang)
            .cloned()
            .collect();
        let test: Vec<_> = test_records
            .iter()
            .filter(|r| r.lang == lang)
            .cloned()
            .collect();
        if train.is_empty() || test.is_empty() {
            continue;
        }
        let max_tokens = config.classify.max_tokens;
        let train_enc = encode_for_finetune(&train, &merges, &vocab, &labels, max_tokens);
        let valid_enc = encode_for_finetune(&valid, &merges, &vocab, &labels, max_tokens);
        let test_enc = encode_for_finetune(&test, &merges, &vocab, &labels, max_tokens);
        let train_xy: Vec<_> = train_enc.iter().map(|(x, y, _)| (x.clone(), *y)).collect();
        let valid_xy: Vec<_> = valid_enc.iter().map(|(x, y, _)| (x.clone(), *y)).collect();
        let schedule = FineTuneSchedule {
            epochs: config.classify.finetune_epochs,
            batch_size: config.classify.finetune_batch_size,
            lr: config.classify.finetune_lr,
            seed: labeled_seed(config.seed, &format!("finetune-{}", lang.code())),
            pooling,
        };
        let (clf, _) = fine_tune(
            &ckpt,
            &train_xy,
            &valid_xy,
            &labels,
            lang.index() as u32,
            &schedule,
        )
        .map_err(|e| PipelineError::Data(e.to_string()))?;
        let mut predictions = Vec::with_capacity(test_enc.len());
        for (ids, gold_idx, example_id) in &test_enc {
            let pred = clf
                .predict(ids)
                .map_err(|e| PipelineError::Data(e.to_string()))?;
            predictions.push(Prediction {
                example_id: example_id.clone(),
                gold: labels[*gold_idx].clone(),
                pred: clf.labels[pred].clone(),
            });
        }
        let rel = predictions_file(Arch::MlmFinetune.name(), lang);
        ensure_parent(&config.path(&rel))?;
        classify::write_predictions(&config.path(&rel), &predictions)
            .map_err(|e| PipelineError::Data(e.to_string()))?;
        outputs.push(rel);
    }
    let hash = params_hash(config.seed, &config.classify);
    Ok((outputs, hash))
}

// -------------------------------------------------------------- evaluate --

fn report_file(arch: &str, lang: Language) -> String {
    format!("reports/{arch}.{}.json", lang.code())
}

fn stage_evaluate(config: &PipelineConfig) -> StageResult {
    let pred_dir = config.path("predictions");
    let mut entries: Vec<String> = std::fs::read_dir(&pred_dir)
        .map_err(|e| PipelineError::Data(format!("{}: {e}", pred_dir.display())))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|name| name.ends_with(".tsv"))
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(PipelineError::Data("no prediction files to evaluate".into()));
    }
    // The declared label set comes from the training data, so classes a
    // classifier never predicts still pull the macro average down.
    let declared = label_set(&corpus::load_records(&config.path("balanced/train.jsonl"))?);
    let mut outputs = Vec::new();
    for name in entries {
        let stem = name.trim_end_matches(".tsv");
        let Some((arch, lang_code)) = stem.rsplit_once('.') else {
            continue;
        };
        let lang: Language = lang_code
            .parse()
            .map_err(|e: corpus::CorpusError| PipelineError::Data(e.to_string()))?;
        let predictions = classify::read_predictions(&pred_dir.join(&name))
            .map_err(|e| PipelineError::Data(e.to_string()))?;
        let gold: Vec<String> = predictions.iter().map(|p| p.gold.clone()).collect();
        let pred: Vec<String> = predictions.iter().map(|p| p.pred.clone()).collect();
        let mut labels: std::collections::BTreeSet<String> = declared.iter().cloned().collect();
        labels.extend(gold.iter().cloned());
        labels.extend(pred.iter().cloned());
        let labels: Vec<String> = labels.into_iter().collect();
        let report = evaluate(&gold, &pred, &labels)
            .map_err(|e| PipelineError::Data(e.to_string()))?;
        let rel = report_file(arch, lang);
        ensure_parent(&config.path(&rel))?;
        report
            .save_json(&config.path(&rel))
            .map_err(|e| PipelineError::Data(e.to_string()))?;
        outputs.push(rel);
    }
    let hash = params_hash(config.seed, &json!({ "metric": "macro_f1" }));
    Ok((outputs, hash))
}

// ---------------------------------------------------------------- report --

fn stage_report(config: &PipelineConfig) -> StageResult {
    let reports_dir = config.path("reports");
    let mut cells: BTreeMap<String, BTreeMap<Language, f64>> = BTreeMap::new();
    let mut entries: Vec<String> = std::fs::read_dir(&reports_dir)
        .map_err(|e| PipelineError::Data(format!("{}: {e}", reports_dir.display())))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|name| name.ends_with(".json"))
        .collect();
    entries.sort();
    for name in entries {
        let stem = name.trim_end_matches(".json");
        let Some((arch, lang_code)) = stem.rsplit_once('.') else {
            continue;
        };
        let Ok(lang) = lang_code.parse::<Language>() else {
            continue;
        };
        let report = classify::EvalReport::load_json(&reports_dir.join(&name))
            .map_err(|e| PipelineError::Data(e.to_string()))?;
        cells
            .entry(arch.to_string())
            .or_default()
            .insert(lang, report.macro_f1);
    }
    let rendered = super::report::render_table(&cells);
    std::fs::write(config.path("report.txt"), &rendered)
        .map_err(|e| PipelineError::Data(e.to_string()))?;
    println!("{rendered}");
    let hash = params_hash(config.seed, &json!({ "format": "macro_f1_table" }));
    Ok((vec!["report.txt".into()], hash))
}
