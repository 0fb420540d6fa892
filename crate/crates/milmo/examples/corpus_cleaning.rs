//! Clean raw documents, split them 8:1:1, and balance a labeled set.
//!
//! ```bash
//! cargo run --example corpus_cleaning
//! ```

use milmo::corpus::{
    balance_dataset, clean_document, split_corpus, BalanceStrategy, LabeledExample, Language,
    RawDocument, DEFAULT_MIN_LENGTH,
};

fn main() {
    let raw_docs = vec![
        RawDocument {
            text: "see https://news.example/article?id=1 for the full story about the харвест".into(),
            lang: Language::Kazakh,
            source_id: "kk-0001".into(),
        },
        RawDocument {
            text: "<b>жаңалықтар</b> бүгінгі күннің маңызды оқиғалары туралы қысқаша шолу".into(),
            lang: Language::Kazakh,
            source_id: "kk-0002".into(),
        },
        RawDocument {
            text: "тым қысқа".into(), // too short, will be rejected
            lang: Language::Kazakh,
            source_id: "kk-0003".into(),
        },
    ];

    println!("== cleaning ==");
    let mut cleaned = Vec::new();
    for doc in &raw_docs {
        match clean_document(doc, DEFAULT_MIN_LENGTH) {
            Ok(clean) => {
                println!("{}: kept ({} chars): {}", doc.source_id, clean.length, clean.text);
                cleaned.push(clean);
            }
            Err(rejection) => {
                println!("{}: rejected ({})", rejection.source_id, rejection.reason);
            }
        }
    }

    println!("\n== 8:1:1 split ==");
    let docs: Vec<u32> = (0..23).collect();
    let split = split_corpus(&docs, 42);
    println!(
        "23 documents -> train {} / valid {} / test {}",
        split.train.len(),
        split.valid.len(),
        split.test.len()
    );

    println!("\n== balancing ==");
    let mut examples = Vec::new();
    for (label, count) in [("economy", 9), ("sport", 3), ("nature", 5)] {
        for i in 0..count {
            examples.push(LabeledExample {
                text: format!("{label} document {i}"),
                label: label.into(),
                lang: Language::Kazakh,
            });
        }
    }
    let balanced = balance_dataset(&examples, BalanceStrategy::DownsampleToMin, 7).unwrap();
    println!("before: 9 economy / 3 sport / 5 nature");
    let mut counts = std::collections::BTreeMap::new();
    for e in &balanced {
        *counts.entry(e.label.as_str()).or_insert(0usize) += 1;
    }
    println!("after:  {counts:?}");
}
