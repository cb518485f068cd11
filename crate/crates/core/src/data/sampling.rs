use std::collections::HashSet;

use log::warn;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};

/// A held-out positive and the negatives it is ranked against.
#[derive(Clone, Debug, PartialEq)]
pub struct NegativeSample {
    pub user: usize,
    pub positive: usize,
    pub negatives: Vec<usize>,
    /// Set when the pool was smaller than the request and items repeat.
    pub with_replacement: bool,
}

impl NegativeSample {
    /// Positive first, then the negatives.
    pub fn candidates(&self) -> Vec<usize> {
        let mut c = Vec::with_capacity(self.negatives.len() + 1);
        c.push(self.positive);
        c.extend_from_slice(&self.negatives);
        c
    }
}

/// Sampling weight of an item with `count` clicks. Unclicked items get the
/// weight of a single click so they stay reachable.
pub fn popularity_weight(count: u64, alpha: f64) -> f64 {
    (count.max(1) as f64).powf(alpha)
}

/// Draws `n` negatives for `user` with probability proportional to
/// popularity^`alpha`, never picking anything in `clicks`.
pub fn sample_negatives<R: Rng + ?Sized>(
    user: usize,
    positive: usize,
    clicks: &[usize],
    click_counts: &[u64],
    n: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<NegativeSample> {
    let seen: HashSet<usize> = clicks.iter().copied().chain([positive]).collect();
    let pool: Vec<usize> = (0..click_counts.len()).filter(|i| !seen.contains(i)).collect();
    if pool.is_empty() {
        return Err(Error::Data(format!("user {user}: no unclicked news left to sample negatives from")));
    }
    let weights: Vec<f64> = pool.iter().map(|&i| popularity_weight(click_counts[i], alpha)).collect();
    let with_replacement = pool.len() < n;
    let negatives = if with_replacement {
        warn!(
            "user {user}: only {} candidate negatives for {n} requested, sampling with replacement",
            pool.len()
        );
        let dist = WeightedIndex::new(&weights).map_err(|e| Error::Data(format!("negative weights: {e}")))?;
        (0..n).map(|_| pool[dist.sample(rng)]).collect()
    } else {
        rand::seq::index::sample_weighted(rng, pool.len(), |i| weights[i], n)
            .map_err(|e| Error::Data(format!("negative weights: {e}")))?
            .into_iter()
            .map(|i| pool[i])
            .collect()
    };
    Ok(NegativeSample {
        user,
        positive,
        negatives,
        with_replacement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn history_items_are_never_drawn() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let counts = vec![5u64; 300];
        let clicks: Vec<usize> = (0..50).collect();
        for _ in 0..200 {
            let s = sample_negatives(0, 60, &clicks, &counts, 100, 1.0, &mut rng).unwrap();
            assert_eq!(s.negatives.len(), 100);
            assert!(!s.with_replacement);
            assert!(s.negatives.iter().all(|&i| i >= 50 && i != 60));
            let uniq: HashSet<_> = s.negatives.iter().collect();
            assert_eq!(uniq.len(), 100);
        }
    }

    #[test]
    fn small_pool_falls_back_to_replacement() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let counts = vec![1u64; 20];
        let s = sample_negatives(0, 0, &[1, 2], &counts, 100, 1.0, &mut rng).unwrap();
        assert!(s.with_replacement);
        assert_eq!(s.negatives.len(), 100);
        assert!(s.negatives.iter().all(|&i| i > 2));
    }

    #[test]
    fn empty_pool_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let counts = vec![1u64; 3];
        assert!(sample_negatives(0, 0, &[1, 2], &counts, 100, 1.0, &mut rng).is_err());
    }

    #[test]
    fn uniform_popularity_gives_uniform_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let counts = vec![3u64; 400];
        let draws = 10_000;
        let mut hits = vec![0usize; 400];
        for _ in 0..draws {
            for i in sample_negatives(0, 0, &[], &counts, 100, 1.0, &mut rng).unwrap().negatives {
                hits[i] += 1;
            }
        }
        // Item 0 is the positive; the other 399 are equally likely with p = 100/399.
        assert_eq!(hits[0], 0);
        let p = 100.0 / 399.0;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        let mean = draws as f64 * p;
        // Bonferroni-style slack over 399 items: 4.5σ.
        for &h in &hits[1..] {
            assert!((h as f64 - mean).abs() < 4.5 * sigma, "{h} vs {mean}±{sigma}");
        }
    }

    #[test]
    fn heavy_item_is_drawn_proportionally_more() {
        // With a pool much larger than the draw size, inclusion probability is
        // close to linear in the weight.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = vec![1u64; 4000];
        counts[1] = 9;
        let draws = 10_000;
        let mut heavy = 0usize;
        let mut light = 0usize;
        for _ in 0..draws {
            for i in sample_negatives(0, 0, &[], &counts, 100, 1.0, &mut rng).unwrap().negatives {
                if i == 1 {
                    heavy += 1;
                } else {
                    light += 1;
                }
            }
        }
        let per_light = light as f64 / 3998.0;
        let ratio = heavy as f64 / per_light;
        assert!((ratio - 9.0).abs() < 0.2 * 9.0, "ratio {ratio}");
    }
}
