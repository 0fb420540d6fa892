//! The `milmo` command line: every pipeline stage as a subcommand, plus
//! small standalone modes for working with individual files.
//!
//! Exit codes: 0 success, 2 configuration error, 3 stage dependency error,
//! 4 data error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use milmo::bpe;
use milmo::classify;
use milmo::corpus::{self, DatasetRecord, Language};
use milmo::mlm::MlmConfig;
use milmo::pipeline::{run_all, run_stage, PipelineConfig, PipelineError};
use milmo::segment::{segment, Granularity, MorphemeLexicon, TokenSequence};
use milmo::word2vec;

#[derive(Parser)]
#[command(
    name = "milmo",
    version,
    about = "Multilingual low-resource NLP pipeline: cleaning, segmentation, shared subword vocabulary, embeddings, masked-LM pretraining and classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct StageArgs {
    /// Pipeline configuration (TOML). Defaults to ./milmo.toml when present.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured global seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Clean raw documents (generating the bundled mini-corpus if configured).
    Clean(StageArgs),
    /// Tokenize cleaned documents per language.
    Segment {
        #[command(flatten)]
        stage: StageArgs,
        /// Standalone mode: segment this JSON-Lines file instead of the
        /// pipeline artifacts.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Language code (standalone mode).
        #[arg(long)]
        lang: Option<String>,
        /// word | syllable | morpheme (standalone mode).
        #[arg(long)]
        granularity: Option<String>,
        /// Lexicon file for morpheme/word longest-match segmentation.
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Split segmented documents 8:1:1 per language.
    Split(StageArgs),
    /// Downsample the labeled train split to equal class counts.
    Balance(StageArgs),
    /// Learn the shared subword vocabulary on the train split.
    BpeTrain {
        #[command(flatten)]
        stage: StageArgs,
        /// Override the target vocabulary size.
        #[arg(long)]
        target_vocab: Option<usize>,
        /// Standalone mode: segmented JSON-Lines files to train on.
        #[arg(long, num_args = 1..)]
        input: Vec<PathBuf>,
        /// Output directory for merges.txt and vocab.txt (standalone mode).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Encode token sequences with trained merges.
    BpeEncode {
        #[command(flatten)]
        stage: StageArgs,
        #[arg(long)]
        merges: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Report subword coverage of a corpus.
    BpeCoverage {
        #[arg(long)]
        merges: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        /// Segmented JSON-Lines file to measure.
        #[arg(long)]
        input: PathBuf,
    },
    /// Train per-language skip-gram embeddings.
    W2vTrain {
        #[command(flatten)]
        stage: StageArgs,
        /// Override the embedding dimension.
        #[arg(long)]
        dim: Option<usize>,
        /// Standalone mode: train one language from this segmented
        /// JSON-Lines file.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Language to train in standalone mode.
        #[arg(long)]
        lang: Option<String>,
        /// Embedding file to write in standalone mode.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Nearest neighbors in an embedding file.
    W2vNn {
        /// Embedding file (`V d` header).
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        word: String,
        #[arg(short = 'k', long, default_value_t = 10)]
        k: usize,
    },
    /// Pretrain the masked-language-model encoder.
    MlmPretrain {
        #[command(flatten)]
        stage: StageArgs,
        /// Override the training step budget.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Fine-tune the pretrained encoder for classification.
    Finetune(StageArgs),
    /// Train word2vec zoo classifiers.
    ClfTrain {
        #[command(flatten)]
        stage: StageArgs,
        /// Train only this architecture.
        #[arg(long)]
        arch: Option<String>,
    },
    /// Score predictions with per-class precision/recall/F1 and macro-F1.
    Evaluate {
        #[command(flatten)]
        stage: StageArgs,
        /// Standalone mode: gold labels, one per line.
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Standalone mode: predicted labels, one per line.
        #[arg(long)]
        pred: Option<PathBuf>,
    },
    /// Render the per-language, per-architecture macro-F1 table.
    Report(StageArgs),
    /// Run every stage in order on the bundled mini-corpus.
    RunAll(StageArgs),
}

fn load_config(args: &StageArgs) -> Result<PipelineConfig, PipelineError> {
    let mut config = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => {
            let default = PathBuf::from("milmo.toml");
            if default.exists() {
                PipelineConfig::load(&default)?
            } else {
                PipelineConfig::from_defaults()
            }
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn data_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Data(e.to_string())
}

fn read_sequences(path: &Path) -> Result<Vec<TokenSequence>, PipelineError> {
    let records = corpus::load_records(path)?;
    records
        .into_iter()
        .map(|r| {
            let tokens = r.tokens.ok_or_else(|| {
                PipelineError::Data(format!(
                    "{}: record has no tokens field; segment it first",
                    path.display()
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

fn cmd_segment_standalone(
    input: &Path,
    output: Option<&PathBuf>,
    lang: &str,
    granularity: &str,
    lexicon: Option<&PathBuf>,
) -> Result<(), PipelineError> {
    let lang: Language = lang.parse()?;
    let granularity =
        Granularity::parse(granularity).map_err(|e| PipelineError::Config(e.to_string()))?;
    let lexicon = match lexicon {
        Some(path) => Some(MorphemeLexicon::load(path)?),
        None => None,
    };
    let records = corpus::load_records(input)?;
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        let seq = segment(&rec.text, lang, granularity, lexicon.as_ref())?;
        out.push(DatasetRecord {
            tokens: Some(seq.tokens),
            lang,
            ..rec
        });
    }
    match output {
        Some(path) => corpus::write_records(path, &out)?,
        None => {
            for rec in &out {
                println!("{}", serde_json::to_string(rec).map_err(data_err)?);
            }
        }
    }
    Ok(())
}

fn cmd_bpe_train_standalone(
    inputs: &[PathBuf],
    out_dir: &Path,
    target_vocab: usize,
    marker: &str,
) -> Result<(), PipelineError> {
    let mut words = bpe::WordFrequencyTable::new();
    for path in inputs {
        for seq in read_sequences(path)? {
            for token in &seq.tokens {
                words.add(token, 1);
            }
        }
    }
    let (merges, vocab) = bpe::train_bpe(&words, target_vocab, marker)?;
    std::fs::create_dir_all(out_dir).map_err(data_err)?;
    bpe::save_merges(&out_dir.join("merges.txt"), &merges)?;
    vocab.save(&out_dir.join("vocab.txt"))?;
    eprintln!(
        "trained {} merges, vocabulary of {} entries",
        merges.len(),
        vocab.len()
    );
    Ok(())
}

fn cmd_bpe_encode_standalone(
    merges: &Path,
    vocab: &Path,
    input: &Path,
    output: Option<&PathBuf>,
    marker: &str,
) -> Result<(), PipelineError> {
    let merges = bpe::load_merges(merges)?;
    let vocab = bpe::SubwordVocab::load(vocab, marker)?;
    let seqs = read_sequences(input)?;
    let encoded = bpe::encode_corpus(&seqs, &merges, &vocab);
    let mut lines = Vec::with_capacity(encoded.len());
    for (seq, ids) in seqs.iter().zip(encoded) {
        lines.push(
            serde_json::to_string(&serde_json::json!({
                "lang": seq.lang.code(),
                "ids": ids,
            }))
            .map_err(data_err)?,
        );
    }
    match output {
        Some(path) => std::fs::write(path, lines.join("\n") + "\n").map_err(data_err)?,
        None => {
            for line in lines {
                println!("{line}");
            }
        }
    }
    Ok(())
}

fn cmd_w2v_train_standalone(
    config: &PipelineConfig,
    input: &Path,
    lang: Language,
    output: &Path,
) -> Result<(), PipelineError> {
    let seqs: Vec<TokenSequence> = read_sequences(input)?
        .into_iter()
        .filter(|s| s.lang == lang)
        .collect();
    let vocab = word2vec::build_word_vocab(&seqs, config.word2vec.min_count).map_err(data_err)?;
    let sg = word2vec::SkipGramConfig {
        dim: config.word2vec.dim,
        window: config.word2vec.window,
        negatives: config.word2vec.negatives,
        epochs: config.word2vec.epochs,
        initial_lr: config.word2vec.initial_lr,
        subsample: config.word2vec.subsample,
        seed: config.seed,
    };
    let table = word2vec::train_skipgram(&seqs, &vocab, &sg).map_err(data_err)?;
    table.save(output).map_err(data_err)?;
    eprintln!(
        "trained {}-dim embeddings for {} words",
        table.dim,
        table.vocab_size()
    );
    Ok(())
}

fn cmd_evaluate_standalone(gold: &Path, pred: &Path) -> Result<(), PipelineError> {
    let read_labels = |path: &Path| -> Result<Vec<String>, PipelineError> {
        Ok(std::fs::read_to_string(path)
            .map_err(data_err)?
            .lines()
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect())
    };
    let gold = read_labels(gold)?;
    let pred = read_labels(pred)?;
    let label_set: Vec<String> = gold
        .iter()
        .chain(&pred)
        .cloned()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let report = classify::evaluate(&gold, &pred, &label_set)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).map_err(data_err)?
    );
    Ok(())
}

fn dispatch(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Clean(args) => {
            run_stage("clean", &load_config(&args)?)?;
        }
        Command::Segment {
            stage,
            input,
            output,
            lang,
            granularity,
            lexicon,
        } => match input {
            Some(input) => {
                let lang = lang.ok_or_else(|| {
                    PipelineError::Config("--lang is required with --input".into())
                })?;
                let granularity = granularity.ok_or_else(|| {
                    PipelineError::Config("--granularity is required with --input".into())
                })?;
                cmd_segment_standalone(
                    &input,
                    output.as_ref(),
                    &lang,
                    &granularity,
                    lexicon.as_ref(),
                )?;
            }
            None => {
                run_stage("segment", &load_config(&stage)?)?;
            }
        },
        Command::Split(args) => {
            run_stage("split", &load_config(&args)?)?;
        }
        Command::Balance(args) => {
            run_stage("balance", &load_config(&args)?)?;
        }
        Command::BpeTrain {
            stage,
            target_vocab,
            input,
            out_dir,
        } => {
            let mut config = load_config(&stage)?;
            if let Some(tv) = target_vocab {
                config.bpe.target_vocab = tv;
            }
            if !input.is_empty() {
                let out_dir = out_dir.ok_or_else(|| {
                    PipelineError::Config("--out-dir is required with --input".into())
                })?;
                cmd_bpe_train_standalone(
                    &input,
                    &out_dir,
                    config.bpe.target_vocab,
                    &config.bpe.end_of_word_marker,
                )?;
            } else {
                run_stage("bpe-train", &config)?;
            }
        }
        Command::BpeEncode {
            stage,
            merges,
            vocab,
            input,
            output,
        } => match (&merges, &vocab, &input) {
            (Some(merges), Some(vocab), Some(input)) => {
                let config = load_config(&stage)?;
                cmd_bpe_encode_standalone(
                    merges,
                    vocab,
                    input,
                    output.as_ref(),
                    &config.bpe.end_of_word_marker,
                )?;
            }
            (None, None, None) => {
                run_stage("bpe-encode", &load_config(&stage)?)?;
            }
            _ => {
                return Err(PipelineError::Config(
                    "standalone bpe-encode needs --merges, --vocab and --input together".into(),
                ))
            }
        },
        Command::BpeCoverage {
            merges,
            vocab,
            input,
        } => {
            let merges = bpe::load_merges(&merges)?;
            let vocab = bpe::SubwordVocab::load(&vocab, bpe::END_OF_WORD)?;
            let seqs = read_sequences(&input)?;
            let report = bpe::coverage(&vocab, &merges, &seqs);
            println!(
                "{}",
                serde_json::to_string_pretty(&report).map_err(data_err)?
            );
        }
        Command::W2vTrain {
            stage,
            dim,
            input,
            lang,
            output,
        } => {
            let mut config = load_config(&stage)?;
            if let Some(dim) = dim {
                config.word2vec.dim = dim;
            }
            match input {
                Some(input) => {
                    let lang: Language = lang
                        .ok_or_else(|| {
                            PipelineError::Config("--lang is required with --input".into())
                        })?
                        .parse()?;
                    let output = output.ok_or_else(|| {
                        PipelineError::Config("--output is required with --input".into())
                    })?;
                    cmd_w2v_train_standalone(&config, &input, lang, &output)?;
                }
                None => {
                    run_stage("w2v-train", &config)?;
                }
            }
        }
        Command::W2vNn { embeddings, word, k } => {
            let table = word2vec::EmbeddingTable::load(&embeddings).map_err(data_err)?;
            let neighbors = word2vec::nearest_neighbors(&word, k, &table).map_err(data_err)?;
            for (neighbor, cosine) in neighbors {
                println!("{neighbor}\t{cosine:.6}");
            }
        }
        Command::MlmPretrain { stage, steps } => {
            let mut config = load_config(&stage)?;
            // Accept a bare model config file as well: its top-level keys
            // mirror the [mlm] section.
            if let Some(path) = &stage.config {
                if let Ok(model) = MlmConfig::from_file(path) {
                    config.mlm.emb_dim = model.emb_dim;
                    config.mlm.n_layers = model.n_layers;
                    config.mlm.n_heads = model.n_heads;
                    config.mlm.dropout = model.dropout;
                    config.mlm.n_langs = model.n_langs;
                    config.mlm.max_len = model.max_len;
                    config.mlm.vocab_size = model.vocab_size;
                }
            }
            if let Some(steps) = steps {
                config.mlm.steps = steps;
            }
            run_stage("mlm-pretrain", &config)?;
        }
        Command::Finetune(args) => {
            run_stage("finetune", &load_config(&args)?)?;
        }
        Command::ClfTrain { stage, arch } => {
            let mut config = load_config(&stage)?;
            if let Some(arch) = arch {
                classify::Arch::parse(&arch)
                    .map_err(|e| PipelineError::Config(e.to_string()))?;
                config.classify.archs = vec![arch];
            }
            run_stage("clf-train", &config)?;
        }
        Command::Evaluate { stage, gold, pred } => match (&gold, &pred) {
            (Some(gold), Some(pred)) => cmd_evaluate_standalone(gold, pred)?,
            (None, None) => {
                run_stage("evaluate", &load_config(&stage)?)?;
            }
            _ => {
                return Err(PipelineError::Config(
                    "standalone evaluate needs both --gold and --pred".into(),
                ))
            }
        },
        Command::Report(args) => {
            run_stage("report", &load_config(&args)?)?;
        }
        Command::RunAll(args) => {
            run_all(&load_config(&args)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
