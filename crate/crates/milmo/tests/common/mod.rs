//! Independent reference implementations used by the integration suites.
//!
//! These deliberately share no code with the library paths they check: the
//! BPE reference recounts every pair from scratch each iteration over plain
//! string symbols, and the macro-F1 reference tallies per-class counts
//! directly from the label vectors.

use std::collections::{BTreeMap, BTreeSet};

use milmo::rng::Rng;

pub const SPECIALS: usize = 5;

/// Brute-force BPE: full recount per iteration, highest count first,
/// lexicographic (left, right) tie-break, merge-all left to right, prune
/// parents whose occurrences reach zero. Pairs touching the end-of-word
/// marker are not candidates. Returns the merge list and the surviving
/// vocabulary (alphabet plus merged subwords, minus pruned).
pub fn reference_bpe(
    words: &[(String, u64)],
    target_vocab: usize,
    marker: &str,
) -> (Vec<(String, String)>, BTreeSet<String>) {
    let mut corpus: Vec<(Vec<String>, u64)> = words
        .iter()
        .map(|(w, c)| {
            let mut syms: Vec<String> = w.chars().map(|ch| ch.to_string()).collect();
            syms.push(marker.to_string());
            (syms, *c)
        })
        .collect();

    let mut alphabet: BTreeSet<String> = BTreeSet::new();
    for (syms, _) in &corpus {
        for s in syms {
            alphabet.insert(s.clone());
        }
    }
    assert!(
        target_vocab >= SPECIALS + alphabet.len(),
        "reference_bpe target below alphabet"
    );
    let budget = target_vocab - SPECIALS - alphabet.len();

    let mut live: BTreeSet<String> = alphabet.clone();
    let mut merges: Vec<(String, String)> = Vec::new();

    for _ in 0..budget {
        // Full recount of word-internal pairs.
        let mut counts: BTreeMap<(String, String), u64> = BTreeMap::new();
        for (syms, freq) in &corpus {
            for pair in syms.windows(2) {
                if pair[0] == marker || pair[1] == marker {
                    continue;
                }
                *counts
                    .entry((pair[0].clone(), pair[1].clone()))
                    .or_insert(0) += freq;
            }
        }
        // BTreeMap iterates keys ascending, so tracking a strictly greater
        // count keeps the lexicographically smallest pair on ties.
        let mut best: Option<((String, String), u64)> = None;
        for (pair, count) in &counts {
            let better = match &best {
                Some((_, best_count)) => count > best_count,
                None => true,
            };
            if better {
                best = Some((pair.clone(), *count));
            }
        }
        let Some(((left, right), _)) = best else { break };
        let merged = format!("{left}{right}");

        for (syms, _) in &mut corpus {
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == left && syms[i + 1] == right {
                    out.push(merged.clone());
                    i += 2;
                } else {
                    out.push(syms[i].clone());
                    i += 1;
                }
            }
            *syms = out;
        }

        live.insert(merged.clone());
        // Prune: recount occurrences of the two parents from scratch.
        for parent in [&left, &right] {
            let occurrences: u64 = corpus
                .iter()
                .map(|(syms, freq)| syms.iter().filter(|s| *s == parent).count() as u64 * freq)
                .sum();
            if occurrences == 0 {
                live.remove(parent.as_str());
            }
        }
        merges.push((left, right));
    }
    (merges, live)
}

/// Brute-force macro-F1 straight from the label vectors.
pub fn reference_macro_f1(gold: &[String], pred: &[String], label_set: &[String]) -> f64 {
    let mut f1_sum = 0.0;
    for class in label_set {
        let tp = gold
            .iter()
            .zip(pred)
            .filter(|(g, p)| *g == class && *p == class)
            .count() as f64;
        let gold_count = gold.iter().filter(|g| *g == class).count() as f64;
        let pred_count = pred.iter().filter(|p| *p == class).count() as f64;
        let precision = if pred_count == 0.0 { 0.0 } else { tp / pred_count };
        let recall = if gold_count == 0.0 { 0.0 } else { tp / gold_count };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        f1_sum += f1;
    }
    f1_sum / label_set.len() as f64
}

/// Random word-frequency corpora for the BPE equivalence check: at most
/// `max_words` distinct words over an alphabet of at most `max_alpha`
/// letters.
#[allow(dead_code)] // each test target compiles its own copy of this module
pub fn random_word_table(rng: &mut Rng, max_words: usize, max_alpha: usize) -> Vec<(String, u64)> {
    let alpha_size = 2 + rng.gen_range(max_alpha - 1);
    let alphabet: Vec<char> = ('a'..='z').take(alpha_size).collect();
    let n_words = 1 + rng.gen_range(max_words);
    let mut table: BTreeMap<String, u64> = BTreeMap::new();
    for _ in 0..n_words {
        let len = 1 + rng.gen_range(8);
        let word: String = (0..len)
            .map(|_| alphabet[rng.gen_range(alphabet.len())])
            .collect();
        *table.entry(word).or_insert(0) += 1 + rng.gen_range(9) as u64;
    }
    table.into_iter().collect()
}
