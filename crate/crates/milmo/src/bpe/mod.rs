//! Shared byte-pair-encoding subword vocabulary.
//!
//! The vocabulary is learned once over the combined training splits of all
//! languages: words are split into characters plus an end-of-word marker,
//! the most frequent adjacent pair is merged repeatedly, and subwords whose
//! occurrences were entirely merged away are pruned from the table.
//!
//! File formats: merges are one `left<SPACE>right` per line in rank order;
//! the vocabulary file holds one subword per line, where the line number is
//! the id after the five special tokens.

mod codec;
mod trainer;

pub use codec::{coverage, decode, encode_corpus, encode_word, CoverageReport, MergeRanks};
pub use trainer::{train_bpe, train_bpe_with};

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::segment::TokenSequence;

/// Default end-of-word marker. Keeping it as a distinct trailing symbol lets
/// merges fuse it into suffix subwords, which is what distinguishes the
/// affixing grammar of the target languages.
pub const END_OF_WORD: &str = "</w>";

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const MASK: u32 = 2;
pub const BOS: u32 = 3;
pub const EOS: u32 = 4;
pub const N_SPECIALS: usize = 5;

pub const SPECIAL_TOKENS: [&str; N_SPECIALS] = ["<pad>", "<unk>", "<mask>", "<bos>", "<eos>"];

#[derive(Debug, Error)]
pub enum BpeError {
    #[error("empty corpus: nothing to train on")]
    EmptyCorpus,
    #[error("target vocabulary {target} is smaller than {required} (specials + alphabet)")]
    TargetTooSmall { target: usize, required: usize },
    #[error("line {0}: malformed merge (expected `left right`)")]
    MalformedMerge(usize),
    #[error("vocabulary collision on {0:?}")]
    Collision(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One learned merge; `rank` is its 0-based position in the merge order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Merge {
    pub left: String,
    pub right: String,
    pub rank: usize,
}

/// Word frequency counts feeding BPE training. Counts are at least 1 and
/// words must not contain whitespace (tokens from the segmenters never do).
#[derive(Debug, Clone, Default)]
pub struct WordFrequencyTable {
    counts: BTreeMap<String, u64>,
}

impl WordFrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, word: &str, count: u64) {
        if count == 0 || word.is_empty() {
            return;
        }
        debug_assert!(!word.chars().any(char::is_whitespace));
        *self.counts.entry(word.to_string()).or_insert(0) += count;
    }

    pub fn from_sequences<'a>(seqs: impl IntoIterator<Item = &'a TokenSequence>) -> Self {
        let mut table = WordFrequencyTable::new();
        for seq in seqs {
            for token in &seq.tokens {
                table.add(token, 1);
            }
        }
        table
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(w, &c)| (w.as_str(), c))
    }
}

impl<S: AsRef<str>> FromIterator<(S, u64)> for WordFrequencyTable {
    fn from_iter<T: IntoIterator<Item = (S, u64)>>(iter: T) -> Self {
        let mut table = WordFrequencyTable::new();
        for (w, c) in iter {
            table.add(w.as_ref(), c);
        }
        table
    }
}

/// The id table shared by every model: special tokens occupy the fixed
/// lowest ids, learned subwords follow.
#[derive(Debug, Clone, PartialEq)]
pub struct SubwordVocab {
    id_to_subword: Vec<String>,
    subword_to_id: HashMap<String, u32>,
    pub target_size: usize,
    pub end_of_word_marker: String,
}

impl SubwordVocab {
    /// Assemble from non-special subwords in id order.
    pub fn from_subwords(
        subwords: impl IntoIterator<Item = String>,
        target_size: usize,
        end_of_word_marker: &str,
    ) -> Result<Self, BpeError> {
        let mut id_to_subword: Vec<String> =
            SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        id_to_subword.extend(subwords);
        let mut subword_to_id = HashMap::with_capacity(id_to_subword.len());
        for (id, sw) in id_to_subword.iter().enumerate() {
            if subword_to_id.insert(sw.clone(), id as u32).is_some() {
                return Err(BpeError::Collision(sw.clone()));
            }
        }
        Ok(SubwordVocab {
            id_to_subword,
            subword_to_id,
            target_size,
            end_of_word_marker: end_of_word_marker.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.id_to_subword.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, subword: &str) -> Option<u32> {
        self.subword_to_id.get(subword).copied()
    }

    pub fn subword(&self, id: u32) -> Option<&str> {
        self.id_to_subword.get(id as usize).map(String::as_str)
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < N_SPECIALS
    }

    /// Ids eligible for random replacement during masking.
    pub fn non_special_range(&self) -> std::ops::Range<u32> {
        N_SPECIALS as u32..self.len() as u32
    }

    pub fn subwords(&self) -> impl Iterator<Item = &str> {
        self.id_to_subword.iter().map(String::as_str)
    }

    /// Write the vocabulary file: one non-special subword per line.
    pub fn save(&self, path: &Path) -> Result<(), BpeError> {
        let mut out = String::new();
        for sw in &self.id_to_subword[N_SPECIALS..] {
            out.push_str(sw);
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    /// Load a vocabulary file written by [`SubwordVocab::save`].
    pub fn load(path: &Path, end_of_word_marker: &str) -> Result<Self, BpeError> {
        let content = fs::read_to_string(path)?;
        let subwords: Vec<String> = content
            .lines()
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        let size = subwords.len() + N_SPECIALS;
        SubwordVocab::from_subwords(subwords, size, end_of_word_marker)
    }
}

/// Write merges, one `left<SPACE>right` per line in rank order.
pub fn save_merges(path: &Path, merges: &[Merge]) -> Result<(), BpeError> {
    let mut out = String::new();
    for m in merges {
        out.push_str(&m.left);
        out.push(' ');
        out.push_str(&m.right);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Load a merge file; line order defines the rank.
pub fn load_merges(path: &Path) -> Result<Vec<Merge>, BpeError> {
    let content = fs::read_to_string(path)?;
    let mut merges = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (left, right) = line
            .split_once(' ')
            .ok_or(BpeError::MalformedMerge(i + 1))?;
        if left.is_empty() || right.is_empty() || right.contains(' ') {
            return Err(BpeError::MalformedMerge(i + 1));
        }
        merges.push(Merge {
            left: left.to_string(),
            right: right.to_string(),
            rank: merges.len(),
        });
    }
    Ok(merges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specials_occupy_lowest_ids() {
        let vocab = SubwordVocab::from_subwords(vec!["a".into()], 6, END_OF_WORD).unwrap();
        assert_eq!(vocab.subword(PAD), Some("<pad>"));
        assert_eq!(vocab.subword(UNK), Some("<unk>"));
        assert_eq!(vocab.subword(MASK), Some("<mask>"));
        assert_eq!(vocab.subword(BOS), Some("<bos>"));
        assert_eq!(vocab.subword(EOS), Some("<eos>"));
        assert_eq!(vocab.id("a"), Some(5));
    }

    #[test]
    fn vocab_is_a_bijection() {
        let vocab =
            SubwordVocab::from_subwords(vec!["a".into(), "b".into(), "ab".into()], 8, END_OF_WORD)
                .unwrap();
        for id in 0..vocab.len() as u32 {
            let sw = vocab.subword(id).unwrap();
            assert_eq!(vocab.id(sw), Some(id));
        }
        assert!(
            SubwordVocab::from_subwords(vec!["a".into(), "a".into()], 7, END_OF_WORD).is_err()
        );
    }

    #[test]
    fn merge_and_vocab_files_roundtrip() {
        let dir = std::env::temp_dir().join("milmo-bpe-io");
        std::fs::create_dir_all(&dir).unwrap();

        let merges = vec![
            Merge {
                left: "l".into(),
                right: "o".into(),
                rank: 0,
            },
            Merge {
                left: "lo".into(),
                right: "w".into(),
                rank: 1,
            },
        ];
        let mpath = dir.join("merges.txt");
        save_merges(&mpath, &merges).unwrap();
        assert_eq!(load_merges(&mpath).unwrap(), merges);

        let vocab = SubwordVocab::from_subwords(
            vec!["a".into(), "</w>".into(), "ab".into()],
            10,
            END_OF_WORD,
        )
        .unwrap();
        let vpath = dir.join("vocab.txt");
        vocab.save(&vpath).unwrap();
        let loaded = SubwordVocab::load(&vpath, END_OF_WORD).unwrap();
        assert_eq!(loaded.id("ab"), vocab.id("ab"));
        assert_eq!(loaded.len(), vocab.len());
    }

    #[test]
    fn malformed_merge_lines_are_rejected() {
        let dir = std::env::temp_dir().join("milmo-bpe-io");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad-merges.txt");
        std::fs::write(&path, "a b\nnospace\n").unwrap();
        assert!(matches!(load_merges(&path), Err(BpeError::MalformedMerge(2))));
    }

    #[test]
    fn frequency_table_accumulates() {
        let mut t = WordFrequencyTable::new();
        t.add("low", 5);
        t.add("low", 2);
        t.add("", 3);
        t.add("x", 0);
        assert_eq!(t.len(), 1);
        assert_eq!(t.iter().next(), Some(("low", 7)));
    }
}
