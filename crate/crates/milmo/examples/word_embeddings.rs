//! Train skip-gram embeddings on a two-topic corpus and query neighbors.
//!
//! ```bash
//! cargo run --example word_embeddings
//! ```

use milmo::corpus::Language;
use milmo::rng::Rng;
use milmo::segment::{Granularity, TokenSequence};
use milmo::word2vec::{
    build_word_vocab, cosine, nearest_neighbors, train_skipgram, SkipGramConfig,
};

fn main() {
    // Two disjoint topics; words co-occur only within their topic.
    let weather = ["rain", "cloud", "storm", "wind", "snow"];
    let market = ["price", "trade", "goods", "coin", "stall"];
    let mut rng = Rng::new(1);
    let mut seqs = Vec::new();
    for s in 0..600 {
        let topic: &[&str] = if s % 2 == 0 { &weather } else { &market };
        let tokens: Vec<String> = (0..10)
            .map(|_| topic[rng.gen_range(topic.len())].to_string())
            .collect();
        seqs.push(TokenSequence {
            tokens,
            lang: Language::Uyghur,
            granularity: Granularity::Word,
        });
    }

    let vocab = build_word_vocab(&seqs, 1).unwrap();
    let config = SkipGramConfig {
        dim: 32,
        window: 4,
        negatives: 5,
        epochs: 5,
        subsample: 0.0,
        seed: 2,
        ..Default::default()
    };
    println!(
        "training {}-dim skip-gram over {} words...",
        config.dim,
        vocab.len()
    );
    let table = train_skipgram(&seqs, &vocab, &config).unwrap();

    for query in ["rain", "price"] {
        println!("\nnearest neighbors of {query:?}:");
        for (word, score) in nearest_neighbors(query, 4, &table).unwrap() {
            println!("  {word:<6} cosine {score:+.3}");
        }
    }

    let vec_of = |w: &str| table.vector(table.id(w).unwrap()).to_vec();
    println!(
        "\ncosine(rain, storm) = {:+.3}   cosine(rain, coin) = {:+.3}",
        cosine(&vec_of("rain"), &vec_of("storm")),
        cosine(&vec_of("rain"), &vec_of("coin")),
    );
}
