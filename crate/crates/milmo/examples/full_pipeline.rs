//! The whole pipeline end to end on the bundled synthetic mini-corpus:
//! clean, segment, split, balance, shared BPE vocabulary, per-language
//! embeddings, masked-LM pretraining, classifier training and the final
//! report — all through the library API.
//!
//! The same run is available from the command line as `milmo run-all`.
//!
//! ```bash
//! cargo run --example full_pipeline
//! ```

use milmo::pipeline::{run_stage, PipelineConfig, STAGE_ORDER};

fn main() {
    let dir = std::env::temp_dir().join("milmo-full-pipeline-example");
    let _ = std::fs::remove_dir_all(&dir);

    let mut config = PipelineConfig::default();
    config.data_dir = dir.clone();
    config.seed = 7;
    // Keep this example quick: a smaller corpus and shorter schedules than
    // the defaults.
    config.corpus.docs_per_lang = 120;
    config.mlm.steps = 200;
    config.classify.epochs = 12;
    config.classify.finetune_epochs = 8;

    for stage in STAGE_ORDER {
        let started = std::time::Instant::now();
        let outputs = run_stage(stage, &config).expect(stage);
        println!(
            "{stage:<13} {:>5.1}s  -> {}",
            started.elapsed().as_secs_f64(),
            outputs.join(", ")
        );
    }

    println!("\nartifacts under {}", dir.display());
    let report = std::fs::read_to_string(dir.join("report.txt")).unwrap();
    println!("\n{report}");
}
