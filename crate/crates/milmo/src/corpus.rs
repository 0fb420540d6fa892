//! Corpus ingestion: cleaning, length filtering, splitting and balancing.
//!
//! Datasets are UTF-8 JSON Lines, one object per line with fields `text`
//! (string), `label` (string, optional for unlabeled corpora) and `lang`
//! (one of `mn|bo|ug|kk|ko`). Documents rejected during cleaning are logged
//! as TSV `source_id<TAB>reason`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Rng;

/// The five supported languages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Language {
    #[serde(rename = "mn")]
    Mongolian,
    #[serde(rename = "bo")]
    Tibetan,
    #[serde(rename = "ug")]
    Uyghur,
    #[serde(rename = "kk")]
    Kazakh,
    #[serde(rename = "ko")]
    Korean,
}

impl Language {
    pub const ALL: [Language; 5] = [
        Language::Mongolian,
        Language::Tibetan,
        Language::Uyghur,
        Language::Kazakh,
        Language::Korean,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Language::Mongolian => "mn",
            Language::Tibetan => "bo",
            Language::Uyghur => "ug",
            Language::Kazakh => "kk",
            Language::Korean => "ko",
        }
    }

    /// Stable index in `[0, 5)`, used for language embeddings.
    pub fn index(self) -> usize {
        match self {
            Language::Mongolian => 0,
            Language::Tibetan => 1,
            Language::Uyghur => 2,
            Language::Kazakh => 3,
            Language::Korean => 4,
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Language {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mn" => Ok(Language::Mongolian),
            "bo" => Ok(Language::Tibetan),
            "ug" => Ok(Language::Uyghur),
            "kk" => Ok(Language::Kazakh),
            "ko" => Ok(Language::Korean),
            other => Err(CorpusError::Language(other.to_string())),
        }
    }
}

/// A document as ingested: may still contain URLs, markup and stray symbols.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawDocument {
    pub text: String,
    pub lang: Language,
    pub source_id: String,
}

/// A cleaned document. `length` counts non-whitespace characters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanDocument {
    pub text: String,
    pub lang: Language,
    pub length: usize,
}

/// A classification example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub text: String,
    pub label: String,
    pub lang: Language,
}

/// Why a document was rejected during cleaning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    TooShort,
    EmptyAfterCleaning,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::TooShort => f.write_str("too_short"),
            RejectReason::EmptyAfterCleaning => f.write_str("empty_after_cleaning"),
        }
    }
}

/// A rejected document: its id plus the reason, ready for the TSV log.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub source_id: String,
    pub reason: RejectReason,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unknown language code {0:?} (expected one of mn|bo|ug|kk|ko)")]
    Language(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("file is not valid UTF-8 at line {0}")]
    Encoding(usize),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Default minimum document length (non-whitespace characters).
pub const DEFAULT_MIN_LENGTH: usize = 20;

/// Number of non-whitespace unicode scalar values.
pub fn text_length(text: &str) -> usize {
    text.chars().filter(|c| !c.is_whitespace()).count()
}

fn is_url_token(token: &str) -> bool {
    token.contains("://") || token.to_lowercase().starts_with("www.")
}

fn strip_markup(text: &str) -> String {
    // Drop everything between '<' and the matching '>'. An unclosed '<'
    // swallows to the end of the text.
    let mut out = String::with_capacity(text.len());
    let mut in_tag = false;
    for ch in text.chars() {
        match ch {
            '<' => in_tag = true,
            '>' if in_tag => {
                in_tag = false;
                out.push(' ');
            }
            _ if !in_tag => out.push(ch),
            _ => {}
        }
    }
    out
}

/// Normalize a raw text: strip markup tags, URL tokens and control
/// characters, and collapse whitespace runs to single spaces.
pub fn clean_text(text: &str) -> String {
    let untagged = strip_markup(text);
    // Tab/newline/carriage-return count as whitespace; other control
    // characters are dropped.
    let filtered: String = untagged
        .chars()
        .filter(|&c| !c.is_control() || c == '\t' || c == '\n' || c == '\r')
        .collect();
    let mut words: Vec<&str> = filtered.split_whitespace().collect();
    words.retain(|w| !is_url_token(w));
    words.join(" ")
}

/// Clean one document and apply the minimum-length filter.
pub fn clean_document(
    raw: &RawDocument,
    min_length: usize,
) -> Result<CleanDocument, Rejection> {
    let text = clean_text(&raw.text);
    if text.is_empty() {
        return Err(Rejection {
            source_id: raw.source_id.clone(),
            reason: RejectReason::EmptyAfterCleaning,
        });
    }
    let length = text_length(&text);
    if length < min_length {
        return Err(Rejection {
            source_id: raw.source_id.clone(),
            reason: RejectReason::TooShort,
        });
    }
    Ok(CleanDocument {
        text,
        lang: raw.lang,
        length,
    })
}

/// An 8:1:1 partition of a document list.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit<T> {
    pub train: Vec<T>,
    pub valid: Vec<T>,
    pub test: Vec<T>,
    pub seed: u64,
}

/// Seeded shuffle, then contiguous slices: `|valid| = |test| = floor(N/10)`,
/// remainder to train.
pub fn split_corpus<T: Clone>(docs: &[T], seed: u64) -> DatasetSplit<T> {
    let n = docs.len();
    let tenth = n / 10;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = Rng::new(seed);
    rng.shuffle(&mut order);
    let n_train = n - 2 * tenth;
    let pick = |range: std::ops::Range<usize>| -> Vec<T> {
        order[range].iter().map(|&i| docs[i].clone()).collect()
    };
    DatasetSplit {
        train: pick(0..n_train),
        valid: pick(n_train..n_train + tenth),
        test: pick(n_train + tenth..n),
        seed,
    }
}

/// Downsampling strategy for [`balance_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BalanceStrategy {
    DownsampleToMin,
}

/// Downsample every class to the size of the smallest one. Within a class
/// the kept examples are a seeded uniform sample, preserved in their
/// original relative order; classes are emitted in sorted label order.
pub fn balance_dataset(
    examples: &[LabeledExample],
    _strategy: BalanceStrategy,
    seed: u64,
) -> Result<Vec<LabeledExample>, CorpusError> {
    if examples.is_empty() {
        return Err(CorpusError::InvalidDataset(
            "cannot balance an empty dataset".into(),
        ));
    }
    let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, ex) in examples.iter().enumerate() {
        by_label.entry(ex.label.as_str()).or_default().push(i);
    }
    let min_count = by_label.values().map(Vec::len).min().expect("non-empty");
    let mut rng = Rng::new(seed);
    let mut out = Vec::with_capacity(min_count * by_label.len());
    for indices in by_label.values() {
        let picked = rng.sample_indices(indices.len(), min_count);
        out.extend(picked.into_iter().map(|k| examples[indices[k]].clone()));
    }
    Ok(out)
}

#[derive(Debug, Deserialize, Serialize)]
struct RecordLine {
    text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    lang: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    source_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<String>>,
}

/// One JSON-Lines record with everything the pipeline may attach to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub text: String,
    pub label: Option<String>,
    pub lang: Language,
    pub source_id: Option<String>,
    pub tokens: Option<Vec<String>>,
}

fn parse_line(line: &str, line_no: usize) -> Result<DatasetRecord, CorpusError> {
    let rec: RecordLine = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    let lang = rec.lang.parse::<Language>().map_err(|_| CorpusError::Parse {
        line: line_no,
        message: format!("unknown language code {:?}", rec.lang),
    })?;
    Ok(DatasetRecord {
        text: rec.text,
        label: rec.label,
        lang,
        source_id: rec.source_id,
        tokens: rec.tokens,
    })
}

fn load_numbered(path: &Path) -> Result<Vec<(usize, DatasetRecord)>, CorpusError> {
    let file = File::open(path)?;
    let mut reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut buf = Vec::new();
    let mut line_no = 0usize;
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let line = std::str::from_utf8(&buf)
            .map_err(|_| CorpusError::Encoding(line_no))?
            .trim_end_matches(['\n', '\r']);
        if line.is_empty() {
            continue;
        }
        records.push((line_no, parse_line(line, line_no)?));
    }
    Ok(records)
}

/// Read a JSON-Lines dataset file; any malformed line is reported with its
/// 1-based line number.
pub fn load_records(path: &Path) -> Result<Vec<DatasetRecord>, CorpusError> {
    Ok(load_numbered(path)?.into_iter().map(|(_, r)| r).collect())
}

/// Load labeled examples; a record without a `label` field is an error.
pub fn load_dataset(path: &Path) -> Result<Vec<LabeledExample>, CorpusError> {
    load_numbered(path)?
        .into_iter()
        .map(|(line, rec)| match rec.label {
            Some(label) => Ok(LabeledExample {
                text: rec.text,
                label,
                lang: rec.lang,
            }),
            None => Err(CorpusError::Parse {
                line,
                message: "missing \"label\" field".into(),
            }),
        })
        .collect()
}

/// Load raw documents for cleaning; `label` is ignored, a missing
/// `source_id` falls back to the line number.
pub fn load_documents(path: &Path) -> Result<Vec<RawDocument>, CorpusError> {
    Ok(load_numbered(path)?
        .into_iter()
        .map(|(line, rec)| RawDocument {
            text: rec.text,
            lang: rec.lang,
            source_id: rec.source_id.unwrap_or_else(|| format!("line-{line}")),
        })
        .collect())
}

/// Append-free writer for JSON-Lines records.
pub fn write_records(path: &Path, records: &[DatasetRecord]) -> Result<(), CorpusError> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut w, rec).map_err(|e| CorpusError::InvalidDataset(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Write the rejected-document log: TSV `source_id<TAB>reason`.
pub fn write_rejection_log(path: &Path, rejections: &[Rejection]) -> Result<(), CorpusError> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    for r in rejections {
        writeln!(w, "{}\t{}", r.source_id, r.reason)?;
    }
    w.flush()?;
    Ok(())
}
