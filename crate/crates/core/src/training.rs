//! Mixed objective (masked-item likelihood plus the diversity regularizer)
//! and the training loop.

use std::fmt::Write as _;
use std::rc::Rc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::{sample_masks, truncate_pad, Corpus, PadMode, PaddedSequence};
use crate::error::{Error, Result};
use crate::model::CoverageRecommender;
use crate::news_encoder::TitleBatch;
use crate::nn::Dropout;
use crate::numerics::{AdamState, Real, Tape, Tensor, Var};
use crate::Rng;

/// Guard added to norms before normalizing rows.
pub const NORM_EPS: f64 = 1e-8;

/// Loss terms of one batch on the tape.
pub struct LossVars<'t, T: Real> {
    pub main: Var<'t, T>,
    pub diverse: Var<'t, T>,
    pub total: Var<'t, T>,
}

/// Mean negative log-likelihood of `labels` under row-wise softmax of
/// `logits` (one row per masked slot).
pub fn main_loss<'t, T: Real>(logits: Var<'t, T>, labels: Rc<Vec<usize>>) -> Var<'t, T> {
    assert!(!labels.is_empty(), "main loss needs at least one masked slot");
    logits.log_softmax_rows().pick_rows(labels).mean().scale(-T::one())
}

/// Negative mean squared distance between unit-normalized outputs and
/// unit-normalized coverage, row by row. Rows where either side has zero
/// norm contribute zero.
pub fn diverse_loss<'t, T: Real>(outputs: Var<'t, T>, coverage: Var<'t, T>) -> Var<'t, T> {
    let eps = T::from_f64_lossy(NORM_EPS);
    let live: Vec<T> = {
        let (o, c) = (outputs.value(), coverage.value());
        (0..o.rows())
            .map(|r| {
                let nz = |row: &[T]| row.iter().any(|&v| v != T::zero());
                if nz(o.row(r)) && nz(c.row(r)) {
                    T::one()
                } else {
                    T::zero()
                }
            })
            .collect()
    };
    let gap = outputs
        .row_normalize(eps)
        .sub(coverage.row_normalize(eps))
        .row_sum_sq()
        .mul_const(Rc::new(live));
    gap.mean().scale(-T::one())
}

/// `main + γ·diverse`.
pub fn total_loss<'t, T: Real>(main: Var<'t, T>, diverse: Var<'t, T>, gamma: f64) -> Var<'t, T> {
    main.add(diverse.scale(T::from_f64_lossy(gamma)))
}

/// Loss values of one batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchLoss {
    pub main: f64,
    pub diverse: f64,
    pub total: f64,
    pub masked: usize,
}

impl BatchLoss {
    pub fn from_vars<T: Real>(l: &LossVars<'_, T>, masked: usize) -> Self {
        Self {
            main: l.main.value().item().as_f64(),
            diverse: l.diverse.value().item().as_f64(),
            total: l.total.value().item().as_f64(),
            masked,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.main.is_finite() && self.diverse.is_finite() && self.total.is_finite()
    }

    /// Checks the regularizer range and the mixing identity.
    pub fn within_bounds(&self, gamma: f64, tol: f64) -> bool {
        self.diverse >= -4.0 - tol
            && self.diverse <= tol
            && self.main >= -tol
            && (self.total - (self.main + gamma * self.diverse)).abs() <= tol
    }
}

/// Per-epoch means of the batch losses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub main: f64,
    pub diverse: f64,
    pub total: f64,
    pub batches: usize,
    pub seconds: f64,
}

impl EpochStats {
    /// `epoch  main  diverse  total  seconds`, tab separated.
    pub fn log_line(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.3}",
            self.epoch, self.main, self.diverse, self.total, self.seconds
        )
    }
}

/// Catalog titles plus each trainable user's training clicks.
#[derive(Clone, Debug)]
pub struct TrainSet {
    pub titles: TitleBatch,
    /// `(user index, training clicks)`; users without training clicks are left out.
    pub users: Vec<(usize, Vec<usize>)>,
}

impl TrainSet {
    pub fn from_corpus(corpus: &Corpus) -> Result<Self> {
        let titles = TitleBatch::new(&corpus.titles(), corpus.vocab.len())?;
        let users = corpus
            .users
            .iter()
            .enumerate()
            .filter(|(_, u)| !u.train_clicks().is_empty())
            .map(|(i, u)| (i, u.train_clicks().to_vec()))
            .collect();
        Ok(Self { titles, users })
    }
}

/// Owns a model, its optimizer state and the training generator.
pub struct Trainer {
    pub model: CoverageRecommender<f32>,
    pub config: TrainConfig,
    pub adam: AdamState<f32>,
    rng: Rng,
    epoch: usize,
}

impl Trainer {
    pub fn new(model: CoverageRecommender<f32>, config: TrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            adam: AdamState::new(config.lr),
            model,
            config,
            rng: Rng::seed_from_u64(seed),
            epoch: 0,
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// A random window of at most N clicks, padded and masked.
    pub fn training_sequence(&mut self, clicks: &[usize]) -> Result<PaddedSequence> {
        let n = self.model.config.seq_len;
        let start = if clicks.len() > n {
            self.rng.random_range(0..=clicks.len() - n)
        } else {
            0
        };
        let end = (start + n).min(clicks.len());
        let padded = truncate_pad(&clicks[start..end], n, PadMode::Training)?;
        sample_masks(&padded, self.config.mask_prob, &mut self.rng)
    }

    /// Forward, backward and one Adam step on the given users.
    pub fn step(&mut self, data: &TrainSet, members: &[usize]) -> Result<BatchLoss> {
        let seqs = members
            .iter()
            .map(|&m| self.training_sequence(&data.users[m].1))
            .collect::<Result<Vec<_>>>()?;
        self.step_on(&data.titles, &seqs).map_err(|e| match e {
            Error::Numerical(msg) => Error::Numerical(dump_batch(&msg, members, data, &seqs)),
            e => e,
        })
    }

    /// One optimizer step on already masked sequences.
    pub fn step_on(&mut self, titles: &TitleBatch, seqs: &[PaddedSequence]) -> Result<BatchLoss> {
        let batch = self.model.batch(seqs)?;
        let gamma = self.config.gamma;
        let model = &self.model;
        let tape = Tape::new();
        let p = model.params.bind(&tape, true);
        let mut drop = Dropout::train(model.config.dropout, &mut self.rng);
        let catalog = model.encode_catalog_var(&p, titles, &mut drop);
        let fwd = model.forward(&p, catalog, &batch, &mut drop);
        let vars = model.losses(&p, &fwd, &batch, gamma);
        let loss = BatchLoss::from_vars(&vars, batch.mask_rows.len());
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss {loss:?}")));
        }
        if !loss.within_bounds(gamma, 1e-5) {
            return Err(Error::Numerical(format!("loss terms out of range: {loss:?}")));
        }
        let grads = tape.backward(vars.total)?;
        self.model.params.zero_grads();
        self.model.params.accumulate(&grads, &p);
        self.model.params.adam_step(&mut self.adam)?;
        Ok(loss)
    }

    /// One pass over shuffled users. `on_batch` sees every batch loss.
    pub fn train_epoch(&mut self, data: &TrainSet, mut on_batch: impl FnMut(&BatchLoss)) -> Result<EpochStats> {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..data.users.len()).collect();
        order.shuffle(&mut self.rng);
        let (mut main, mut diverse, mut total, mut batches) = (0.0, 0.0, 0.0, 0);
        for chunk in order.chunks(self.config.batch_size) {
            let loss = self.step(data, chunk)?;
            on_batch(&loss);
            main += loss.main;
            diverse += loss.diverse;
            total += loss.total;
            batches += 1;
        }
        self.epoch += 1;
        let n = batches.max(1) as f64;
        Ok(EpochStats {
            epoch: self.epoch,
            main: main / n,
            diverse: diverse / n,
            total: total / n,
            batches,
            seconds: started.elapsed().as_secs_f64(),
        })
    }

    /// Runs the configured number of epochs.
    pub fn fit(&mut self, data: &TrainSet, mut on_epoch: impl FnMut(&EpochStats)) -> Result<Vec<EpochStats>> {
        let mut out = Vec::with_capacity(self.config.epochs);
        for _ in 0..self.config.epochs {
            let stats = self.train_epoch(data, |_| {})?;
            log::info!("{}", stats.log_line());
            on_epoch(&stats);
            out.push(stats);
        }
        Ok(out)
    }

    pub fn into_model(self) -> CoverageRecommender<f32> {
        self.model
    }
}

fn dump_batch(msg: &str, members: &[usize], data: &TrainSet, seqs: &[PaddedSequence]) -> String {
    let mut s = format!("{msg}; batch:");
    for (m, seq) in members.iter().zip(seqs) {
        let _ = write!(
            s,
            "\n  user {} slots {:?} masked {:?} labels {:?}",
            data.users[*m].0, seq.token_slots, seq.mask_positions, seq.labels
        );
    }
    s
}

/// Trains `model` in place for one epoch with a generator seeded by `seed`.
pub fn train_epoch(
    model: &mut CoverageRecommender<f32>,
    data: &TrainSet,
    config: &TrainConfig,
    seed: u64,
) -> Result<EpochStats> {
    let mut trainer = Trainer::new(model.clone(), config.clone(), seed)?;
    let stats = trainer.train_epoch(data, |_| {})?;
    *model = trainer.into_model();
    Ok(stats)
}

/// Mean `‖ō − c̄‖` between normalized outputs and normalized coverage over
/// the given rows, skipping zero rows.
pub fn output_coverage_distance<T: Real>(outputs: &Tensor<T>, coverage: &Tensor<T>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in 0..outputs.rows() {
        let (o, c) = (outputs.row(r), coverage.row(r));
        let no = o.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt();
        let nc = c.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt();
        if no == 0.0 || nc == 0.0 {
            continue;
        }
        let d2: f64 = o
            .iter()
            .zip(c)
            .map(|(a, b)| (a.as_f64() / no - b.as_f64() / nc).powi(2))
            .sum();
        sum += d2.sqrt();
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
