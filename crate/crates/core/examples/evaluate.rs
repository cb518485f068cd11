//! Trains briefly, then reports AUC, NDCG@k and DIV@k over five sampling
//! seeds, before and after a checkpoint round trip.

use covrec::config::{default_head_map, EvalConfig, ModelConfig, SynthConfig, TrainConfig};
use covrec::data::synth::SyntheticCorpus;
use covrec::evaluation::{evaluate_model, train_and_evaluate};
use covrec::CoverageRecommender;
use rand::SeedableRng;

fn main() -> covrec::Result<()> {
    let corpus = SyntheticCorpus::generate(&SynthConfig::default(), &mut covrec::Rng::seed_from_u64(1))?.to_corpus(30)?;
    let model_cfg = ModelConfig {
        dim: 32,
        heads: 4,
        seq_len: 20,
        layers: 1,
        word_dim: 32,
        news_heads: 4,
        head_map: default_head_map(4),
        ..ModelConfig::default()
    };
    let train_cfg = TrainConfig {
        epochs: 20,
        lr: 3e-3,
        batch_size: 32,
        gamma: 0.001,
        ..TrainConfig::default()
    };
    let eval_cfg = EvalConfig::default();
    let run = train_and_evaluate(&model_cfg, &train_cfg, &eval_cfg, &corpus, 1, |_| {})?;
    println!("{}", run.report.tsv_header());
    println!("{}", run.report.tsv_row("trained"));

    let dir = tempdir()?;
    let ckpt = dir.join("model.ckpt");
    run.model.save(&ckpt, "")?;
    let mut reloaded = CoverageRecommender::new(&model_cfg, corpus.vocab.len(), corpus.num_news(), 99)?;
    reloaded.load_params(&ckpt)?;
    let again = evaluate_model(&reloaded, &corpus, &eval_cfg)?;
    println!("{}", again.tsv_row("reloaded"));
    Ok(())
}

fn tempdir() -> covrec::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join(format!("covrec-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| covrec::Error::io(&dir, e))?;
    Ok(dir)
}
