//! Compares backpropagated gradients of the full training loss with central
//! finite differences on a toy model in 64-bit precision.

use covrec::config::ModelConfig;
use covrec::data::{sample_masks, truncate_pad, PadMode};
use covrec::gradcheck::check_gradients;
use covrec::CoverageRecommender;
use rand::{Rng, SeedableRng};

fn main() -> covrec::Result<()> {
    let cfg = ModelConfig {
        dim: 8,
        heads: 2,
        seq_len: 4,
        layers: 1,
        dropout: 0.0,
        word_dim: 6,
        news_heads: 2,
        head_map: "decay,circle".into(),
        ..ModelConfig::default()
    };
    let (vocab, news) = (30, 12);
    let model = CoverageRecommender::<f64>::new(&cfg, vocab, news, 5)?;
    let mut rng = covrec::Rng::seed_from_u64(5);
    let titles: Vec<Vec<usize>> = (0..news)
        .map(|_| (0..4).map(|_| rng.random_range(1..vocab)).collect())
        .collect();
    let seqs = [vec![1, 2, 3], vec![4, 5, 6, 7], vec![8, 9]]
        .iter()
        .map(|h| {
            let seq = truncate_pad(h, cfg.seq_len, PadMode::Training)?;
            sample_masks(&seq, 0.5, &mut rng)
        })
        .collect::<covrec::Result<Vec<_>>>()?;

    let mut worst = 0.0f64;
    for g in check_gradients(&model, &titles, &seqs, 0.3, 1e-5)? {
        println!("{:<32} |a|={:.3e} |n|={:.3e} rel={:.2e}", g.name, g.analytic_norm, g.numeric_norm, g.rel_error);
        worst = worst.max(g.rel_error);
    }
    println!("worst relative error {worst:.2e}");
    Ok(())
}
