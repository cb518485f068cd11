#![allow(dead_code)]

use covrec::config::ModelConfig;
use covrec::data::{PaddedSequence, Slot};
use covrec::model::CoverageRecommender;
use covrec::news_encoder::TitleBatch;
use covrec::nn::Dropout;
use covrec::numerics::{ParamStore, Tape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOY_VOCAB: usize = 30;
pub const TOY_NEWS: usize = 20;

/// d=8, n=2, N=4, L=1.
pub fn toy_config(head_map: &str) -> ModelConfig {
    ModelConfig {
        dim: 8,
        heads: 2,
        seq_len: 4,
        layers: 1,
        dropout: 0.0,
        word_dim: 6,
        news_layers: 1,
        news_heads: 2,
        head_map: head_map.to_string(),
        ..ModelConfig::default()
    }
}

pub fn toy_titles(seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..TOY_NEWS)
        .map(|_| {
            let len = rng.random_range(2..=5);
            (0..len).map(|_| rng.random_range(2..TOY_VOCAB)).collect()
        })
        .collect()
}

fn seq(slots: Vec<Slot>, truth: Vec<Option<usize>>, labels: Vec<usize>) -> PaddedSequence {
    let mask_positions = slots
        .iter()
        .enumerate()
        .filter(|(_, s)| **s == Slot::Mask)
        .map(|(i, _)| i)
        .collect();
    PaddedSequence {
        attention_mask: slots.iter().map(|s| *s != Slot::Pad).collect(),
        token_slots: slots,
        truth,
        mask_positions,
        labels,
    }
}

/// Three masked training sequences over the toy catalog.
pub fn toy_sequences() -> Vec<PaddedSequence> {
    use Slot::*;
    vec![
        seq(vec![Pad, Item(3), Item(7), Mask], vec![None, Some(3), Some(7), Some(9)], vec![9]),
        seq(
            vec![Item(1), Mask, Item(12), Mask],
            vec![Some(1), Some(2), Some(12), Some(4)],
            vec![2, 4],
        ),
        seq(vec![Mask, Item(19), Item(5), Item(0)], vec![Some(11), Some(19), Some(5), Some(0)], vec![11]),
    ]
}

/// Total loss of the toy batch with dropout off.
pub fn toy_loss(model: &CoverageRecommender<f64>, params: &ParamStore<f64>, titles: &TitleBatch, seqs: &[PaddedSequence], gamma: f64) -> f64 {
    let tape = Tape::new();
    let p = params.bind(&tape, false);
    let batch = model.batch(seqs).unwrap();
    let mut drop = Dropout::off();
    let cat = model.encode_catalog_var(&p, titles, &mut drop);
    let fwd = model.forward(&p, cat, &batch, &mut drop);
    model.losses(&p, &fwd, &batch, gamma).total.value().item()
}
