use std::path::Path;

use relaxnet::data::text::{preprocess, VariantMap};
use relaxnet::harness::generate::{bigram_distribution, l1_distance};
use relaxnet::harness::{generate_text, prepare_data, run_training, Cell, ExperimentConfig, RunStatus};
use relaxnet::linalg::Rng;

#[test]
fn trained_text_model_moves_bigrams_toward_the_corpus() {
    let data_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let mut cfg = ExperimentConfig::preset("desk-nlp", &data_dir).unwrap();
    cfg.seeds = vec![0];
    let data = prepare_data(&cfg).unwrap();
    let cell = Cell { l_w: 2, l_t: 8, hidden: 32 };

    let mut untrained_cfg = cfg.clone();
    untrained_cfg.epochs = 0;
    cfg.epochs = 3;
    let untrained = run_training(&untrained_cfg, &data, cell, 0);
    let trained = run_training(&cfg, &data, cell, 0);
    assert_eq!(trained.record.status, RunStatus::Ok);

    let corpus = std::fs::read_to_string(data_dir.join("sonnets.txt")).unwrap();
    let reference = bigram_distribution(&preprocess(&corpus, &VariantMap::default()));
    let distance = |ckpt| {
        let text = generate_text(ckpt, "shall i compare thee", 4000, &mut Rng::new(5), 1.0).unwrap();
        l1_distance(&bigram_distribution(&text), &reference)
    };
    let before = distance(untrained.checkpoint.as_ref().unwrap());
    let after = distance(trained.checkpoint.as_ref().unwrap());
    assert!(after < before, "bigram L1 before {before:.3}, after {after:.3}");
}

#[test]
fn image_run_beats_chance_after_two_epochs() {
    let data_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let mut cfg = ExperimentConfig::preset("desk-mnist", &data_dir).unwrap();
    cfg.seeds = vec![0];
    cfg.epochs = 2;
    cfg.test_limit = Some(500);
    let data = prepare_data(&cfg).unwrap();
    let run = run_training(&cfg, &data, Cell { l_w: 2, l_t: 4, hidden: 16 }, 0);
    assert_eq!(run.record.status, RunStatus::Ok);
    let err = run.record.final_error().unwrap();
    assert!(err < 0.5, "error {err}");
    assert_eq!(run.record.config.test_size, 500);
}
