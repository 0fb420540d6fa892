//! Pretrain a small encoder with the masked-LM objective, then fine-tune it
//! for classification with the linear + softmax head.
//!
//! ```bash
//! cargo run --example fine_tuning
//! ```

use std::collections::BTreeMap;

use milmo::bpe::{SubwordVocab, END_OF_WORD, N_SPECIALS};
use milmo::classify::{fine_tune, FineTuneSchedule, Pooling};
use milmo::corpus::Language;
use milmo::mlm::{pretrain, MaskingPolicy, MlmConfig, PretrainSchedule};
use milmo::rng::Rng;

fn main() {
    let n_subwords = 60;
    let subwords: Vec<String> = (0..n_subwords).map(|i| format!("s{i}")).collect();
    let vocab =
        SubwordVocab::from_subwords(subwords, n_subwords + N_SPECIALS, END_OF_WORD).unwrap();

    // Unlabeled corpus for pretraining.
    let mut rng = Rng::new(30);
    let mut corpus: BTreeMap<Language, Vec<Vec<u32>>> = BTreeMap::new();
    for lang in [Language::Mongolian, Language::Korean] {
        let docs: Vec<Vec<u32>> = (0..12)
            .map(|_| {
                (0..24)
                    .map(|_| N_SPECIALS as u32 + rng.gen_range(n_subwords) as u32)
                    .collect()
            })
            .collect();
        corpus.insert(lang, docs);
    }

    let config = MlmConfig {
        emb_dim: 16,
        n_layers: 1,
        n_heads: 2,
        dropout: 0.0,
        n_langs: 5,
        max_len: 16,
        vocab_size: vocab.len(),
        ff_mult: 2,
        tie_output: false,
        seed: 31,
    };
    println!("pretraining a {}-dim encoder...", config.emb_dim);
    let ckpt = pretrain(
        &corpus,
        &vocab,
        config,
        &MaskingPolicy::default(),
        &PretrainSchedule {
            steps: 80,
            batch_size: 8,
            lr: 3e-3,
            log_every: 40,
        },
    )
    .unwrap();

    // Labeled data: each class has dedicated marker subwords.
    let labels: Vec<String> = vec!["weather".into(), "market".into(), "travel".into()];
    let make_set = |n: usize, seed: u64| -> Vec<(Vec<u32>, usize)> {
        let mut rng = Rng::new(seed);
        let mut out = Vec::new();
        for label in 0..labels.len() {
            let marker = 5 + label as u32;
            for _ in 0..n {
                let mut ids = vec![marker];
                for _ in 0..4 {
                    ids.push(9 + rng.gen_range(n_subwords - 9) as u32);
                }
                ids.push(marker);
                out.push((ids, label));
            }
        }
        out
    };
    let train = make_set(14, 32);
    let valid = make_set(5, 33);

    println!("fine-tuning the linear + softmax head on 3 classes...");
    let schedule = FineTuneSchedule {
        epochs: 20,
        batch_size: 8,
        lr: 5e-3,
        seed: 34,
        pooling: Pooling::FirstPosition,
    };
    let (classifier, curves) = fine_tune(&ckpt, &train, &valid, &labels, 0, &schedule).unwrap();
    for point in curves.iter().step_by(4) {
        println!(
            "  epoch {:>2}  train loss {:.3}  valid macro-F1 {:.3}",
            point.epoch, point.train_loss, point.valid_macro_f1
        );
    }

    let test = make_set(6, 35);
    println!("test macro-F1: {:.3}", classifier.macro_f1(&test).unwrap());

    // The pooled sentence vector the head sees, usable as a feature.
    let features = classifier.pooled_representation(&test[0].0).unwrap();
    println!(
        "pooled representation of one example: {:?} values, first 4 = {:?}",
        features.numel(),
        &features.data()[..4]
    );
}
