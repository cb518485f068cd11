//! Trains a small model on a synthetic corpus and prints per-epoch losses.
//!
//! cargo run --release --example train_small [epochs]

use covrec::config::{default_head_map, ModelConfig, SynthConfig, TrainConfig};
use covrec::data::synth::SyntheticCorpus;
use covrec::training::{TrainSet, Trainer};
use covrec::CoverageRecommender;
use rand::SeedableRng;

fn main() -> covrec::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let corpus = SyntheticCorpus::generate(&SynthConfig::default(), &mut covrec::Rng::seed_from_u64(0))?.to_corpus(30)?;

    let model_cfg = ModelConfig {
        dim: 32,
        heads: 4,
        seq_len: 20,
        layers: 1,
        dropout: 0.1,
        word_dim: 32,
        news_heads: 4,
        head_map: default_head_map(4),
        ..ModelConfig::default()
    };
    let train_cfg = TrainConfig {
        epochs,
        lr: 3e-3,
        batch_size: 32,
        gamma: 0.001,
        ..TrainConfig::default()
    };
    let model = CoverageRecommender::new(&model_cfg, corpus.vocab.len(), corpus.num_news(), 0)?;
    let mut trainer = Trainer::new(model, train_cfg, 0)?;
    trainer.fit(&TrainSet::from_corpus(&corpus)?, |s| println!("{}", s.log_line()))?;
    Ok(())
}
