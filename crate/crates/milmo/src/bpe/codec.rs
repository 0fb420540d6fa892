//! Applying a trained BPE model: encoding, decoding and coverage.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::corpus::Language;
use crate::segment::TokenSequence;

use super::{Merge, SubwordVocab, UNK};

/// Merge ranks keyed by pair, for fast lookup during encoding.
pub struct MergeRanks<'a> {
    ranks: HashMap<(&'a str, &'a str), usize>,
}

impl<'a> MergeRanks<'a> {
    pub fn new(merges: &'a [Merge]) -> Self {
        let ranks = merges
            .iter()
            .map(|m| ((m.left.as_str(), m.right.as_str()), m.rank))
            .collect();
        MergeRanks { ranks }
    }

    fn rank(&self, left: &str, right: &str) -> Option<usize> {
        self.ranks.get(&(left, right)).copied()
    }
}

fn split_symbols(word: &str, marker: &str) -> Vec<String> {
    let mut syms: Vec<String> = word.chars().map(|c| c.to_string()).collect();
    syms.push(marker.to_string());
    syms
}

fn apply_merges(mut syms: Vec<String>, ranks: &MergeRanks) -> Vec<String> {
    // Repeatedly apply the lowest-ranked merge present anywhere in the
    // word until none applies. Applying merges one rank at a time in order
    // gives the same result; a property test pins that equivalence.
    loop {
        let mut best: Option<(usize, usize)> = None; // (rank, position)
        for i in 0..syms.len().saturating_sub(1) {
            if let Some(rank) = ranks.rank(&syms[i], &syms[i + 1]) {
                if best.map_or(true, |(r, _)| rank < r) {
                    best = Some((rank, i));
                }
            }
        }
        let Some((rank, _)) = best else {
            break;
        };
        // Merge every occurrence of this pair, left to right.
        let mut out: Vec<String> = Vec::with_capacity(syms.len());
        let mut i = 0;
        while i < syms.len() {
            if i + 1 < syms.len() && ranks.rank(&syms[i], &syms[i + 1]) == Some(rank) {
                out.push(format!("{}{}", syms[i], syms[i + 1]));
                i += 2;
            } else {
                out.push(std::mem::take(&mut syms[i]));
                i += 1;
            }
        }
        syms = out;
    }
    syms
}

/// Segment a word with the trained merges and map the pieces to ids.
/// Standalone end-of-word markers are dropped from the output; symbols
/// missing from the vocabulary (unseen characters, pruned subwords) map to
/// [`UNK`].
pub fn encode_word(word: &str, ranks: &MergeRanks, vocab: &SubwordVocab) -> Vec<u32> {
    if word.is_empty() {
        return Vec::new();
    }
    let syms = apply_merges(split_symbols(word, &vocab.end_of_word_marker), ranks);
    syms.into_iter()
        .filter(|s| s != &vocab.end_of_word_marker)
        .map(|s| vocab.id(&s).unwrap_or(UNK))
        .collect()
}

/// Encode every token of every sequence, one id vector per sequence.
pub fn encode_corpus(
    seqs: &[TokenSequence],
    merges: &[Merge],
    vocab: &SubwordVocab,
) -> Vec<Vec<u32>> {
    let ranks = MergeRanks::new(merges);
    seqs.iter()
        .map(|seq| {
            seq.tokens
                .iter()
                .flat_map(|token| encode_word(token, &ranks, vocab))
                .collect()
        })
        .collect()
}

/// Reassemble the text of an id sequence: subwords are concatenated and
/// end-of-word markers removed. Inverse of [`encode_word`] whenever the
/// encoding is UNK-free.
pub fn decode(ids: &[u32], vocab: &SubwordVocab) -> String {
    let marker = vocab.end_of_word_marker.clone();
    let mut out = String::new();
    for &id in ids {
        if let Some(sw) = vocab.subword(id) {
            out.push_str(sw);
        }
    }
    out.replace(&marker, "")
}

/// Fraction of corpus tokens whose encoding contains no UNK id.
#[derive(Debug, Clone, Serialize)]
pub struct CoverageReport {
    pub fraction_covered: f64,
    pub per_language: BTreeMap<Language, f64>,
    pub total_tokens: u64,
    pub covered_tokens: u64,
}

/// Measure coverage of `seqs` under a trained model. An empty corpus is
/// fully covered by convention.
pub fn coverage(vocab: &SubwordVocab, merges: &[Merge], seqs: &[TokenSequence]) -> CoverageReport {
    let ranks = MergeRanks::new(merges);
    let mut totals: BTreeMap<Language, (u64, u64)> = BTreeMap::new();
    for seq in seqs {
        let slot = totals.entry(seq.lang).or_insert((0, 0));
        for token in &seq.tokens {
            slot.0 += 1;
            let ids = encode_word(token, &ranks, vocab);
            if !ids.contains(&UNK) {
                slot.1 += 1;
            }
        }
    }
    let total: u64 = totals.values().map(|&(t, _)| t).sum();
    let covered: u64 = totals.values().map(|&(_, c)| c).sum();
    let per_language = totals
        .into_iter()
        .filter(|&(_, (t, _))| t > 0)
        .map(|(lang, (t, c))| (lang, c as f64 / t as f64))
        .collect();
    CoverageReport {
        fraction_covered: if total == 0 {
            1.0
        } else {
            covered as f64 / total as f64
        },
        per_language,
        total_tokens: total,
        covered_tokens: covered,
    }
}
