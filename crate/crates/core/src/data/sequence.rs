use rand::Rng;

use crate::error::{Error, Result};

/// One position of a fixed-length user sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Pad,
    Mask,
    Item(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PadMode {
    /// Most recent N−1 clicks followed by a `[mask]` to predict.
    Inference,
    /// Most recent N clicks, masked later by [`sample_masks`].
    Training,
}

/// A length-N model input.
#[derive(Clone, Debug, PartialEq)]
pub struct PaddedSequence {
    pub token_slots: Vec<Slot>,
    /// The clicked item behind every non-pad slot (kept for masked slots);
    /// `None` for padding and for the trailing inference `[mask]`.
    pub truth: Vec<Option<usize>>,
    /// `true` for every slot that is not `[PAD]`.
    pub attention_mask: Vec<bool>,
    pub mask_positions: Vec<usize>,
    /// True item per entry of `mask_positions`. Empty in inference mode, where
    /// the target is not part of the input.
    pub labels: Vec<usize>,
}

impl PaddedSequence {
    pub fn len(&self) -> usize {
        self.token_slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_slots.is_empty()
    }

    pub fn non_pad(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m).count()
    }

    /// 1-based ordinal of each non-pad slot among the non-pad slots, 0 for pad.
    pub fn ordinals(&self) -> Vec<usize> {
        let mut k = 0;
        self.attention_mask
            .iter()
            .map(|&m| {
                if m {
                    k += 1;
                    k
                } else {
                    0
                }
            })
            .collect()
    }

    /// Items contributing to coverage at each slot. With `skip_masked`, masked
    /// training slots contribute nothing, as the inference `[mask]` does.
    pub fn coverage_items(&self, skip_masked: bool) -> Vec<Option<usize>> {
        self.token_slots
            .iter()
            .zip(&self.truth)
            .map(|(s, t)| match s {
                Slot::Item(i) => Some(*i),
                Slot::Mask if !skip_masked => *t,
                _ => None,
            })
            .collect()
    }
}

/// Fits a click history into `n` slots, left-padding with `[PAD]`.
pub fn truncate_pad(history: &[usize], n: usize, mode: PadMode) -> Result<PaddedSequence> {
    if n < 2 {
        return Err(Error::Config(format!("sequence length {n} must be at least 2")));
    }
    if history.is_empty() {
        return Err(Error::Contract("cannot build a sequence from an empty history".into()));
    }
    let keep = match mode {
        PadMode::Inference => n - 1,
        PadMode::Training => n,
    };
    let tail = &history[history.len().saturating_sub(keep)..];
    let mut token_slots = vec![Slot::Pad; keep - tail.len()];
    token_slots.extend(tail.iter().map(|&i| Slot::Item(i)));
    let mut truth: Vec<Option<usize>> = token_slots
        .iter()
        .map(|s| match s {
            Slot::Item(i) => Some(*i),
            _ => None,
        })
        .collect();
    let mut mask_positions = Vec::new();
    if mode == PadMode::Inference {
        token_slots.push(Slot::Mask);
        truth.push(None);
        mask_positions.push(n - 1);
    }
    let attention_mask = token_slots.iter().map(|s| *s != Slot::Pad).collect();
    Ok(PaddedSequence {
        token_slots,
        truth,
        attention_mask,
        mask_positions,
        labels: Vec::new(),
    })
}

/// Replaces each non-pad slot by `[mask]` with probability `rho`. When no slot
/// gets picked, one uniformly chosen non-pad slot is masked instead.
pub fn sample_masks<R: Rng + ?Sized>(padded: &PaddedSequence, rho: f64, rng: &mut R) -> Result<PaddedSequence> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Config(format!("mask probability {rho} outside (0, 1]")));
    }
    let candidates: Vec<usize> = padded
        .token_slots
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(s, Slot::Item(_)))
        .map(|(i, _)| i)
        .collect();
    if candidates.is_empty() {
        return Err(Error::Contract("cannot mask a sequence with no items".into()));
    }
    let mut positions: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|_| rng.random::<f64>() < rho)
        .collect();
    if positions.is_empty() {
        positions.push(candidates[rng.random_range(0..candidates.len())]);
    }
    let mut out = padded.clone();
    out.labels.clear();
    for &p in &positions {
        let Slot::Item(item) = out.token_slots[p] else { unreachable!() };
        out.token_slots[p] = Slot::Mask;
        out.labels.push(item);
    }
    out.mask_positions = positions;
    Ok(out)
}
