//! Lists the ablation variants for a base configuration, then trains and
//! evaluates each one for a couple of epochs.

use covrec::config::{default_head_map, EvalConfig, ModelConfig, SynthConfig, TrainConfig};
use covrec::data::synth::SyntheticCorpus;
use covrec::evaluation::{ablation_variants, train_and_evaluate};
use rand::SeedableRng;

fn main() -> covrec::Result<()> {
    let synth = SynthConfig {
        num_users: 200,
        ..SynthConfig::default()
    };
    let corpus = SyntheticCorpus::generate(&synth, &mut covrec::Rng::seed_from_u64(2))?.to_corpus(30)?;
    let base = ModelConfig {
        dim: 16,
        heads: 4,
        seq_len: 20,
        layers: 1,
        word_dim: 16,
        news_heads: 2,
        head_map: default_head_map(4),
        ..ModelConfig::default()
    };
    let train = TrainConfig {
        epochs: 2,
        lr: 3e-3,
        batch_size: 32,
        gamma: 0.001,
        ..TrainConfig::default()
    };
    let eval = EvalConfig {
        seeds: vec![1, 2],
        ..EvalConfig::default()
    };
    let variants = ablation_variants(&base, &train, &[8])?;
    let mut header = false;
    for v in &variants {
        println!("# {} heads={} map={} gamma={}", v.name, v.model.heads, v.model.head_map, v.train.gamma);
        let out = train_and_evaluate(&v.model, &v.train, &eval, &corpus, 2, |_| {})?;
        if !header {
            println!("{}", out.report.tsv_header());
            header = true;
        }
        println!("{}", out.report.tsv_row(&v.name));
    }
    Ok(())
}
