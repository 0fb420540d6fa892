//! Property tests for the contracts each module promises.

mod common;

use proptest::prelude::*;

use milmo::bpe::{
    decode, encode_word, train_bpe, Merge, MergeRanks, SubwordVocab, WordFrequencyTable,
    END_OF_WORD, N_SPECIALS, UNK,
};
use milmo::classify::evaluate;
use milmo::corpus::{clean_text, split_corpus, text_length};
use milmo::segment::{segment_longest_match, segment_space, segment_tibetan_syllables, MorphemeLexicon};

proptest! {
    #[test]
    fn clean_text_is_idempotent(text in ".{0,200}") {
        let once = clean_text(&text);
        prop_assert_eq!(clean_text(&once), once);
    }

    #[test]
    fn clean_output_has_no_forbidden_content(text in ".{0,200}") {
        let cleaned = clean_text(&text);
        prop_assert!(!cleaned.contains("  "));
        prop_assert!(!cleaned.starts_with(' ') && !cleaned.ends_with(' '));
        prop_assert!(cleaned.chars().all(|c| !c.is_control()));
        prop_assert!(!cleaned.contains('<'), "markup survived in {cleaned:?}");
        for word in cleaned.split_whitespace() {
            prop_assert!(!word.contains("://"));
        }
        // Length accounting matches the definition.
        prop_assert_eq!(
            text_length(&cleaned),
            cleaned.chars().filter(|c| !c.is_whitespace()).count()
        );
    }

    #[test]
    fn split_is_partition_with_floor_sizes(n in 0usize..1000, seed in any::<u64>()) {
        let docs: Vec<usize> = (0..n).collect();
        let split = split_corpus(&docs, seed);
        prop_assert_eq!(split.valid.len(), n / 10);
        prop_assert_eq!(split.test.len(), n / 10);
        prop_assert_eq!(split.train.len(), n - 2 * (n / 10));
        let mut all: Vec<usize> = split
            .train
            .iter()
            .chain(&split.valid)
            .chain(&split.test)
            .copied()
            .collect();
        all.sort_unstable();
        prop_assert_eq!(all, docs);
    }

    #[test]
    fn segmenters_emit_no_empty_or_spaced_tokens(text in "\\PC{0,120}") {
        let lex = MorphemeLexicon::new("p", vec!["ab".to_string(), "ба".to_string()]).unwrap();
        for tokens in [
            segment_space(&text),
            segment_tibetan_syllables(&text),
            segment_longest_match(&text, &lex),
        ] {
            for t in tokens {
                prop_assert!(!t.is_empty());
                prop_assert!(!t.chars().any(char::is_whitespace));
            }
        }
    }

    #[test]
    fn longest_match_concat_reproduces_input(word in "[a-d]{0,30}") {
        let lex = MorphemeLexicon::new(
            "p",
            vec!["ab".to_string(), "abc".to_string(), "dd".to_string()],
        )
        .unwrap();
        let tokens = segment_longest_match(&word, &lex);
        prop_assert_eq!(tokens.concat(), word);
    }

    #[test]
    fn longest_match_token_count_bounded_by_chars(text in "[a-e ]{0,40}") {
        // Token count never exceeds the non-whitespace character count,
        // with equality exactly when nothing longer than one character
        // matched.
        let lex = MorphemeLexicon::new(
            "p",
            vec!["ab".to_string(), "cde".to_string()],
        )
        .unwrap();
        let tokens = segment_longest_match(&text, &lex);
        let chars = text.chars().filter(|c| !c.is_whitespace()).count();
        prop_assert!(tokens.len() <= chars);
        let all_single = tokens.iter().all(|t| t.chars().count() == 1);
        prop_assert_eq!(tokens.len() == chars, all_single);
    }
}

/// Strategy for small word-frequency corpora.
fn corpus_strategy() -> impl Strategy<Value = Vec<(String, u64)>> {
    proptest::collection::btree_map("[a-f]{1,8}", 1u64..8, 1..20)
        .prop_map(|m| m.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bpe_matches_bruteforce_reference(entries in corpus_strategy(), extra in 0usize..10) {
        let alphabet: std::collections::BTreeSet<char> =
            entries.iter().flat_map(|(w, _)| w.chars()).collect();
        let target = N_SPECIALS + alphabet.len() + 1 + extra;
        let table: WordFrequencyTable =
            entries.iter().map(|(w, c)| (w.as_str(), *c)).collect();
        let (merges, vocab) = train_bpe(&table, target, END_OF_WORD).unwrap();
        let (ref_merges, ref_live) = common::reference_bpe(&entries, target, END_OF_WORD);
        let got: Vec<(String, String)> = merges
            .iter()
            .map(|m| (m.left.clone(), m.right.clone()))
            .collect();
        prop_assert_eq!(got, ref_merges);
        let got_vocab: std::collections::BTreeSet<String> = vocab
            .subwords()
            .skip(N_SPECIALS)
            .map(str::to_string)
            .collect();
        prop_assert_eq!(got_vocab, ref_live);
    }

    #[test]
    fn encode_decode_roundtrip_when_unk_free(
        entries in corpus_strategy(),
        word in "[a-f]{1,12}",
        extra in 0usize..10,
    ) {
        let alphabet: std::collections::BTreeSet<char> =
            entries.iter().flat_map(|(w, _)| w.chars()).collect();
        let target = N_SPECIALS + alphabet.len() + 1 + extra;
        let table: WordFrequencyTable =
            entries.iter().map(|(w, c)| (w.as_str(), *c)).collect();
        let (merges, vocab) = train_bpe(&table, target, END_OF_WORD).unwrap();
        let ranks = MergeRanks::new(&merges);
        let ids = encode_word(&word, &ranks, &vocab);
        if !ids.contains(&UNK) {
            prop_assert_eq!(decode(&ids, &vocab), word);
        }
    }

    #[test]
    fn merge_application_order_is_irrelevant(
        entries in corpus_strategy(),
        word in "[a-f]{1,12}",
        extra in 0usize..10,
    ) {
        // Applying merges greedily by lowest rank anywhere in the word must
        // equal one pass per rank in rank order.
        let alphabet: std::collections::BTreeSet<char> =
            entries.iter().flat_map(|(w, _)| w.chars()).collect();
        let target = N_SPECIALS + alphabet.len() + 1 + extra;
        let table: WordFrequencyTable =
            entries.iter().map(|(w, c)| (w.as_str(), *c)).collect();
        let (merges, vocab) = train_bpe(&table, target, END_OF_WORD).unwrap();
        let ranks = MergeRanks::new(&merges);
        let fast = encode_word(&word, &ranks, &vocab);
        let slow = rescan_encode(&word, &merges, &vocab);
        prop_assert_eq!(fast, slow);
    }
}

/// Alternative encoder: one full pass per rank, in rank order.
fn rescan_encode(word: &str, merges: &[Merge], vocab: &SubwordVocab) -> Vec<u32> {
    let mut syms: Vec<String> = word.chars().map(|c| c.to_string()).collect();
    syms.push(vocab.end_of_word_marker.clone());
    for merge in merges {
        let mut out: Vec<String> = Vec::with_capacity(syms.len());
        let mut i = 0;
        while i < syms.len() {
            if i + 1 < syms.len() && syms[i] == merge.left && syms[i + 1] == merge.right {
                out.push(format!("{}{}", merge.left, merge.right));
                i += 2;
            } else {
                out.push(syms[i].clone());
                i += 1;
            }
        }
        syms = out;
    }
    syms.into_iter()
        .filter(|s| s != &vocab.end_of_word_marker)
        .map(|s| vocab.id(&s).unwrap_or(UNK))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn macro_f1_matches_bruteforce(
        pairs in proptest::collection::vec((0usize..6, 0usize..6), 1..200),
    ) {
        let label_set: Vec<String> = (0..6).map(|i| format!("c{i}")).collect();
        let gold: Vec<String> = pairs.iter().map(|(g, _)| label_set[*g].clone()).collect();
        let pred: Vec<String> = pairs.iter().map(|(_, p)| label_set[*p].clone()).collect();
        let report = evaluate(&gold, &pred, &label_set).unwrap();
        let reference = common::reference_macro_f1(&gold, &pred, &label_set);
        prop_assert!((report.macro_f1 - reference).abs() < 1e-12);
        // Per-class F1 stays in [0, 1]; macro is their mean.
        let mean: f64 = report.per_class.values().map(|m| m.f1).sum::<f64>()
            / report.per_class.len() as f64;
        prop_assert!((report.macro_f1 - mean).abs() < 1e-12);
    }

    #[test]
    fn macro_f1_invariant_under_renaming(
        pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..100),
    ) {
        let base: Vec<String> = (0..4).map(|i| format!("c{i}")).collect();
        let renamed: Vec<String> = (0..4).map(|i| format!("klass-{}", 3 - i)).collect();
        let gold: Vec<String> = pairs.iter().map(|(g, _)| base[*g].clone()).collect();
        let pred: Vec<String> = pairs.iter().map(|(_, p)| base[*p].clone()).collect();
        let gold2: Vec<String> = pairs.iter().map(|(g, _)| renamed[*g].clone()).collect();
        let pred2: Vec<String> = pairs.iter().map(|(_, p)| renamed[*p].clone()).collect();
        let a = evaluate(&gold, &pred, &base).unwrap();
        let b = evaluate(&gold2, &pred2, &renamed).unwrap();
        prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
    }
}
