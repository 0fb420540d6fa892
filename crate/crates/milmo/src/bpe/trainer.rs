//! BPE training.
//!
//! The trainer keeps pair counts incrementally: each merge retracts the
//! affected words' pair and symbol counts, rewrites the words, and re-adds
//! them. The result is exactly what a full recount per iteration would
//! produce (the test suite checks this against a brute-force reference),
//! just without rescanning untouched words.
//!
//! Only word-internal pairs are merge candidates: the end-of-word marker is
//! a boundary symbol, so pairs touching it are never counted. A single
//! character word therefore trains no merges at all.

use std::collections::{HashMap, HashSet};

use super::{BpeError, Merge, SubwordVocab, WordFrequencyTable, N_SPECIALS};

type Sym = u32;

struct Interner {
    strings: Vec<String>,
    ids: HashMap<String, Sym>,
}

impl Interner {
    fn new() -> Self {
        Interner {
            strings: Vec::new(),
            ids: HashMap::new(),
        }
    }

    fn intern(&mut self, s: &str) -> Sym {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        let id = self.strings.len() as Sym;
        self.strings.push(s.to_string());
        self.ids.insert(s.to_string(), id);
        id
    }

    fn str(&self, sym: Sym) -> &str {
        &self.strings[sym as usize]
    }
}

struct WordState {
    syms: Vec<Sym>,
    freq: u64,
}

struct Counts {
    marker: Sym,
    pairs: HashMap<(Sym, Sym), u64>,
    pair_words: HashMap<(Sym, Sym), HashSet<usize>>,
    occurrences: HashMap<Sym, u64>,
}

impl Counts {
    fn add_word(&mut self, idx: usize, word: &WordState) {
        for &s in &word.syms {
            *self.occurrences.entry(s).or_insert(0) += word.freq;
        }
        for pair in word.syms.windows(2) {
            if pair[0] == self.marker || pair[1] == self.marker {
                continue;
            }
            let key = (pair[0], pair[1]);
            *self.pairs.entry(key).or_insert(0) += word.freq;
            self.pair_words.entry(key).or_default().insert(idx);
        }
    }

    fn remove_word(&mut self, idx: usize, word: &WordState) {
        for &s in &word.syms {
            let slot = self.occurrences.get_mut(&s).expect("tracked symbol");
            *slot -= word.freq;
            if *slot == 0 {
                self.occurrences.remove(&s);
            }
        }
        for pair in word.syms.windows(2) {
            if pair[0] == self.marker || pair[1] == self.marker {
                continue;
            }
            let key = (pair[0], pair[1]);
            let slot = self.pairs.get_mut(&key).expect("tracked pair");
            *slot -= word.freq;
            if *slot == 0 {
                self.pairs.remove(&key);
            }
            if let Some(set) = self.pair_words.get_mut(&key) {
                set.remove(&idx);
                if set.is_empty() {
                    self.pair_words.remove(&key);
                }
            }
        }
    }
}

/// Replace every non-overlapping `(left, right)` occurrence, scanning left
/// to right, with `merged`.
fn apply_merge(syms: &[Sym], left: Sym, right: Sym, merged: Sym) -> Vec<Sym> {
    let mut out = Vec::with_capacity(syms.len());
    let mut i = 0;
    while i < syms.len() {
        if i + 1 < syms.len() && syms[i] == left && syms[i + 1] == right {
            out.push(merged);
            i += 2;
        } else {
            out.push(syms[i]);
            i += 1;
        }
    }
    out
}

/// Train with the default stopping rule: merge while any word-internal pair
/// remains and the merge budget (`target_vocab` minus specials and initial
/// alphabet) is not exhausted.
pub fn train_bpe(
    words: &WordFrequencyTable,
    target_vocab: usize,
    end_of_word_marker: &str,
) -> Result<(Vec<Merge>, SubwordVocab), BpeError> {
    train_bpe_with(words, target_vocab, end_of_word_marker, 1)
}

/// Train, stopping early once no word-internal pair occurs at least
/// `min_pair_frequency` times.
pub fn train_bpe_with(
    words: &WordFrequencyTable,
    target_vocab: usize,
    end_of_word_marker: &str,
    min_pair_frequency: u64,
) -> Result<(Vec<Merge>, SubwordVocab), BpeError> {
    if words.is_empty() {
        return Err(BpeError::EmptyCorpus);
    }
    let mut interner = Interner::new();
    let marker = interner.intern(end_of_word_marker);

    // Symbolize: characters plus the trailing end-of-word marker.
    // WordFrequencyTable iterates in sorted word order, so symbol ids and
    // everything downstream are deterministic.
    let mut states: Vec<WordState> = Vec::with_capacity(words.len());
    for (word, freq) in words.iter() {
        let mut syms: Vec<Sym> = word
            .chars()
            .map(|c| interner.intern(&c.to_string()))
            .collect();
        syms.push(marker);
        states.push(WordState { syms, freq });
    }

    let alphabet_size = interner.strings.len();
    let required = N_SPECIALS + alphabet_size;
    if target_vocab < required {
        return Err(BpeError::TargetTooSmall {
            target: target_vocab,
            required,
        });
    }
    let budget = target_vocab - required;

    let mut counts = Counts {
        marker,
        pairs: HashMap::new(),
        pair_words: HashMap::new(),
        occurrences: HashMap::new(),
    };
    for (idx, word) in states.iter().enumerate() {
        counts.add_word(idx, word);
    }

    // Live vocabulary entries, pruned as parents are merged away.
    let mut live: HashSet<Sym> = (0..alphabet_size as Sym).collect();
    let mut merges: Vec<Merge> = Vec::new();

    for _ in 0..budget {
        // Highest count wins; ties break to the lexicographically smallest
        // (left, right) pair so training is deterministic.
        let best = counts
            .pairs
            .iter()
            .filter(|&(_, &c)| c >= min_pair_frequency)
            .map(|(&(l, r), &c)| (c, interner.str(l), interner.str(r), l, r))
            .max_by(|a, b| {
                a.0.cmp(&b.0)
                    .then_with(|| b.1.cmp(a.1))
                    .then_with(|| b.2.cmp(a.2))
            });
        let Some((_, left_str, right_str, left, right)) = best else {
            break;
        };
        let merged_str = format!("{left_str}{right_str}");
        let merged = interner.intern(&merged_str);

        let affected: Vec<usize> = counts
            .pair_words
            .get(&(left, right))
            .map(|set| set.iter().copied().collect())
            .unwrap_or_default();
        for idx in affected {
            let rewritten = apply_merge(&states[idx].syms, left, right, merged);
            let old = std::mem::replace(&mut states[idx].syms, rewritten);
            let freq = states[idx].freq;
            counts.remove_word(idx, &WordState { syms: old, freq });
            counts.add_word(idx, &states[idx]);
        }

        merges.push(Merge {
            left: interner.str(left).to_string(),
            right: interner.str(right).to_string(),
            rank: merges.len(),
        });
        live.insert(merged);

        // Prune: a parent whose occurrences all disappeared no longer
        // exists in the corpus and leaves the vocabulary.
        for parent in [left, right] {
            if !counts.occurrences.contains_key(&parent) {
                live.remove(&parent);
            }
        }
    }

    // Vocabulary ids: sorted initial alphabet first, then surviving merged
    // subwords in merge order.
    let mut alphabet: Vec<Sym> = (0..alphabet_size as Sym)
        .filter(|s| live.contains(s))
        .collect();
    alphabet.sort_by(|&a, &b| interner.str(a).cmp(interner.str(b)));

    let mut ordered: Vec<String> = Vec::with_capacity(live.len());
    let mut seen: HashSet<Sym> = HashSet::new();
    for s in alphabet {
        if seen.insert(s) {
            ordered.push(interner.str(s).to_string());
        }
    }
    for m in &merges {
        let merged_str = format!("{}{}", m.left, m.right);
        let sym = *interner.ids.get(&merged_str).expect("interned merge");
        if live.contains(&sym) && seen.insert(sym) {
            ordered.push(merged_str);
        }
    }

    let vocab = SubwordVocab::from_subwords(ordered, target_vocab, end_of_word_marker)?;
    Ok((merges, vocab))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bpe::END_OF_WORD;

    fn table(entries: &[(&str, u64)]) -> WordFrequencyTable {
        entries.iter().map(|&(w, c)| (w, c)).collect()
    }

    fn merge_pairs(merges: &[Merge]) -> Vec<(String, String)> {
        merges
            .iter()
            .map(|m| (m.left.clone(), m.right.clone()))
            .collect()
    }

    #[test]
    fn low_lower_merges_with_lexicographic_tie_break() {
        // Pairs (l,o) and (o,w) both occur 7 times; the tie breaks to (l,o),
        // after which (lo,w) at 7 wins the second round.
        let words = table(&[("low", 5), ("lower", 2)]);
        // specials 5 + alphabet {l,o,w,e,r,</w>} 6 = 11; +2 merges = 13.
        let (merges, _) = train_bpe(&words, 13, END_OF_WORD).unwrap();
        assert_eq!(
            merge_pairs(&merges),
            vec![
                ("l".to_string(), "o".to_string()),
                ("lo".to_string(), "w".to_string()),
            ]
        );
    }

    #[test]
    fn single_character_word_trains_no_merges() {
        // "a" has no word-internal pair, whatever the budget.
        let words = table(&[("a", 3)]);
        let (merges, vocab) = train_bpe(&words, 64, END_OF_WORD).unwrap();
        assert!(merges.is_empty());
        assert!(vocab.id("a").is_some());
        assert_eq!(vocab.len(), N_SPECIALS + 2); // 'a' and the marker
    }

    #[test]
    fn prune_drops_fully_merged_parents() {
        // {ab: 1}: the only pair (a,b) merges; afterwards neither a nor b
        // remains anywhere, so both are pruned from the vocabulary.
        let words = table(&[("ab", 1)]);
        let (merges, vocab) = train_bpe(&words, 9, END_OF_WORD).unwrap();
        assert_eq!(merge_pairs(&merges), vec![("a".into(), "b".into())]);
        assert!(vocab.id("ab").is_some());
        assert!(vocab.id("a").is_none(), "a should be pruned");
        assert!(vocab.id("b").is_none(), "b should be pruned");
        assert!(vocab.id(END_OF_WORD).is_some());
    }

    #[test]
    fn surviving_parent_stays_in_vocab() {
        // After merging (a,b) in {ab, ba}, both parents still occur in
        // "ba", so nothing is pruned.
        let words = table(&[("ab", 2), ("ba", 1)]);
        let (merges, vocab) = train_bpe(&words, 9, END_OF_WORD).unwrap();
        assert_eq!(merge_pairs(&merges), vec![("a".into(), "b".into())]);
        assert!(vocab.id("a").is_some());
        assert!(vocab.id("b").is_some());
        assert!(vocab.id("ab").is_some());
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let words = WordFrequencyTable::new();
        assert!(matches!(
            train_bpe(&words, 100, END_OF_WORD),
            Err(BpeError::EmptyCorpus)
        ));
    }

    #[test]
    fn target_below_alphabet_is_rejected() {
        let words = table(&[("abcdef", 1)]);
        // alphabet = 6 chars + marker = 7, specials = 5, required = 12.
        assert!(matches!(
            train_bpe(&words, 11, END_OF_WORD),
            Err(BpeError::TargetTooSmall { required: 12, .. })
        ));
        assert!(train_bpe(&words, 12, END_OF_WORD).is_ok());
    }

    #[test]
    fn vocab_size_never_exceeds_target() {
        let words = table(&[("aaab", 4), ("abab", 2), ("ba", 7)]);
        for target in 9..24 {
            if let Ok((_, vocab)) = train_bpe(&words, target, END_OF_WORD) {
                assert!(vocab.len() <= target, "target {target} gave {}", vocab.len());
            }
        }
    }

    #[test]
    fn min_pair_frequency_stops_early() {
        let words = table(&[("ab", 1)]);
        let (merges, _) = train_bpe_with(&words, 9, END_OF_WORD, 2).unwrap();
        assert!(merges.is_empty(), "no pair reaches frequency 2");
    }

    #[test]
    fn overlapping_pairs_merge_left_to_right() {
        // "aaa" with merge (a,a) becomes [aa, a], not [a, aa].
        let words = table(&[("aaa", 1)]);
        let (merges, _) = train_bpe(&words, 8, END_OF_WORD).unwrap();
        assert_eq!(merge_pairs(&merges), vec![("a".into(), "a".into())]);
    }

    #[test]
    fn training_is_deterministic() {
        let words = table(&[("abc", 3), ("bcd", 3), ("cda", 3), ("dab", 3)]);
        let a = train_bpe(&words, 20, END_OF_WORD).unwrap();
        let b = train_bpe(&words, 20, END_OF_WORD).unwrap();
        assert_eq!(merge_pairs(&a.0), merge_pairs(&b.0));
        assert_eq!(a.1, b.1);
    }
}
