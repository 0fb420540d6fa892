//! Learn a shared subword vocabulary, inspect the merges, and encode text.
//!
//! ```bash
//! cargo run --example bpe_vocabulary
//! ```

use milmo::bpe::{
    coverage, decode, encode_word, train_bpe, MergeRanks, WordFrequencyTable, END_OF_WORD,
};
use milmo::corpus::Language;
use milmo::segment::{Granularity, TokenSequence};

fn main() {
    // Word frequencies from two "languages" sharing suffix structure.
    let words: WordFrequencyTable = [
        ("low", 5u64),
        ("lower", 2),
        ("lowest", 1),
        ("newer", 4),
        ("newest", 3),
        ("wider", 2),
    ]
    .into_iter()
    .collect();

    let (merges, vocab) = train_bpe(&words, 32, END_OF_WORD).unwrap();
    println!("learned {} merges:", merges.len());
    for m in &merges {
        println!("  rank {:>2}: {} + {}", m.rank, m.left, m.right);
    }
    println!("vocabulary has {} entries (5 specials included)", vocab.len());

    let ranks = MergeRanks::new(&merges);
    for word in ["lower", "newest", "wide", "qat"] {
        let ids = encode_word(word, &ranks, &vocab);
        let pieces: Vec<&str> = ids
            .iter()
            .map(|&id| vocab.subword(id).unwrap_or("?"))
            .collect();
        println!("{word:>7} -> {pieces:?} -> decode {:?}", decode(&ids, &vocab));
    }

    // Coverage: the fraction of corpus tokens whose encoding is UNK-free.
    let corpus = vec![
        TokenSequence {
            tokens: vec!["low".into(), "newer".into(), "звук".into()],
            lang: Language::Kazakh,
            granularity: Granularity::Word,
        },
        TokenSequence {
            tokens: vec!["lowest".into(), "wider".into()],
            lang: Language::Uyghur,
            granularity: Granularity::Word,
        },
    ];
    let report = coverage(&vocab, &merges, &corpus);
    println!(
        "coverage: {:.1}% overall, per language {:?}",
        report.fraction_covered * 100.0,
        report
            .per_language
            .iter()
            .map(|(l, f)| (l.code(), (f * 1000.0).round() / 10.0))
            .collect::<Vec<_>>()
    );
}
