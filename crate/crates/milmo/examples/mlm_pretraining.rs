//! Pretrain a small masked-language-model encoder, watch the loss fall, and
//! resume from a checkpoint.
//!
//! ```bash
//! cargo run --example mlm_pretraining
//! ```

use std::collections::BTreeMap;

use milmo::bpe::{SubwordVocab, END_OF_WORD, N_SPECIALS};
use milmo::corpus::Language;
use milmo::mlm::{
    mask_batch, pretrain, resume, IdBatch, MaskingPolicy, MlmConfig, PretrainSchedule,
};
use milmo::rng::Rng;

fn main() {
    // A toy subword vocabulary and a corpus of alternating token patterns.
    let n_subwords = 95;
    let subwords: Vec<String> = (0..n_subwords).map(|i| format!("s{i}")).collect();
    let vocab =
        SubwordVocab::from_subwords(subwords, n_subwords + N_SPECIALS, END_OF_WORD).unwrap();
    let mut corpus: BTreeMap<Language, Vec<Vec<u32>>> = BTreeMap::new();
    for (i, lang) in Language::ALL.iter().cycle().take(30).enumerate() {
        let a = N_SPECIALS as u32 + 2 * (i as u32);
        let b = a + 1;
        let doc: Vec<u32> = (0..48).map(|k| if k % 2 == 0 { a } else { b }).collect();
        corpus.entry(*lang).or_default().push(doc);
    }

    // Show the masking policy on one batch.
    let policy = MaskingPolicy::default();
    let ids = IdBatch::from_rows(&[corpus[&Language::Mongolian][0][..16].to_vec()]);
    let mut rng = Rng::new(9);
    let masked = mask_batch(&ids, &[0], &policy, &vocab, &mut rng);
    println!("original ids: {:?}", ids.row(0));
    println!("masked ids:   {:?}", masked.input_ids.row(0));
    println!(
        "prediction targets at {} of {} positions\n",
        masked.masked_positions(),
        ids.cols
    );

    let config = MlmConfig {
        emb_dim: 32,
        n_layers: 2,
        n_heads: 2,
        dropout: 0.0,
        n_langs: 5,
        max_len: 24,
        vocab_size: vocab.len(),
        ff_mult: 4,
        tie_output: false,
        seed: 11,
    };
    let schedule = PretrainSchedule {
        steps: 120,
        batch_size: 16,
        lr: 5e-3,
        log_every: 20,
    };
    println!(
        "pretraining: {} layers, {} dims, vocab {}...",
        config.n_layers, config.emb_dim, config.vocab_size
    );
    let ckpt = pretrain(&corpus, &vocab, config, &policy, &schedule).unwrap();
    for point in &ckpt.loss_history {
        println!("  step {:>4}  loss {:.4}", point.step, point.loss);
    }

    // Save, reload, and keep training: the trajectory continues exactly as
    // if it had never stopped.
    let path = std::env::temp_dir().join("milmo-example.ckpt");
    ckpt.save(&path).unwrap();
    let reloaded = milmo::mlm::Checkpoint::load(&path).unwrap();
    let longer = PretrainSchedule {
        steps: 160,
        ..schedule
    };
    let resumed = resume(reloaded, &corpus, &vocab, &policy, &longer).unwrap();
    println!("resumed to step {}:", resumed.step);
    for point in resumed.loss_history.iter().skip(ckpt.loss_history.len()) {
        println!("  step {:>4}  loss {:.4}", point.step, point.loss);
    }

    // The trained encoder as a feature extractor: hidden states for an
    // unmasked batch.
    let model = milmo::mlm::MlmModel::from_parts(resumed.config, resumed.params).unwrap();
    let batch = milmo::mlm::MaskedBatch::plain(
        &[corpus[&Language::Tibetan][0][..12].to_vec()],
        &[Language::Tibetan.index() as u32],
    );
    let hidden = model.encode(&batch).unwrap();
    println!(
        "\nencoded 1 sequence of 12 tokens -> hidden states {:?}",
        hidden.hidden.shape()
    );
}
