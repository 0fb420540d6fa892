//! Train word-embedding classifiers on synthetic labeled data and compare
//! them with macro-F1.
//!
//! ```bash
//! cargo run --example classifier_zoo
//! ```

use std::collections::BTreeMap;

use milmo::classify::{
    build_classifier, evaluate, train_classifier, Arch, TrainSchedule, ZooHyper,
};
use milmo::corpus::Language;
use milmo::pipeline::render_table;
use milmo::rng::Rng;
use milmo::segment::{Granularity, TokenSequence};
use milmo::word2vec::{build_word_vocab, train_skipgram, SkipGramConfig};

/// Two classes; each document contains its class marker twice.
fn make_examples(
    n_per_class: usize,
    vocab: usize,
    seed: u64,
) -> Vec<(Vec<u32>, usize)> {
    let mut rng = Rng::new(seed);
    let mut out = Vec::new();
    for label in 0..2usize {
        for _ in 0..n_per_class {
            let mut ids = vec![label as u32];
            for _ in 0..6 {
                ids.push(2 + rng.gen_range(vocab - 2) as u32);
            }
            ids.push(label as u32);
            out.push((ids, label));
        }
    }
    out
}

fn main() {
    // Embeddings over a small synthetic vocabulary.
    let n_words = 30usize;
    let seqs = vec![TokenSequence {
        tokens: (0..n_words).map(|i| format!("word{i:02}")).collect(),
        lang: Language::Mongolian,
        granularity: Granularity::Word,
    }];
    let vocab = build_word_vocab(&seqs, 1).unwrap();
    let table = train_skipgram(
        &seqs,
        &vocab,
        &SkipGramConfig {
            dim: 16,
            epochs: 1,
            subsample: 0.0,
            seed: 4,
            ..Default::default()
        },
    )
    .unwrap();

    let labels = vec!["negative".to_string(), "positive".to_string()];
    let train = make_examples(32, n_words, 10);
    let valid = make_examples(12, n_words, 11);
    let test = make_examples(12, n_words, 12);

    let mut cells: BTreeMap<String, BTreeMap<Language, f64>> = BTreeMap::new();
    for arch in [Arch::FastText, Arch::TextCnn, Arch::TextRnnAtt, Arch::Dpcnn] {
        let mut model =
            build_classifier(arch, &table, &labels, ZooHyper::small(), 20).unwrap();
        let schedule = TrainSchedule {
            epochs: 20,
            batch_size: 16,
            lr: 0.02,
            seed: 21,
        };
        let curves = train_classifier(&mut model, &train, &valid, &schedule).unwrap();
        let best = curves
            .iter()
            .map(|p| p.valid_macro_f1)
            .fold(f64::NAN, f64::max);

        let gold: Vec<String> = test.iter().map(|(_, y)| labels[*y].clone()).collect();
        let mut pred = Vec::new();
        for (ids, _) in &test {
            pred.push(labels[model.predict(ids).unwrap()].clone());
        }
        let report = evaluate(&gold, &pred, &labels).unwrap();
        println!(
            "{:<12} best valid {best:.3}, test macro-F1 {:.3}",
            arch.name(),
            report.macro_f1
        );
        cells
            .entry(arch.name().to_string())
            .or_default()
            .insert(Language::Mongolian, report.macro_f1);
    }

    println!("\n{}", render_table(&cells));
}
