//! The full recommender: parameters, batch layout and forward passes.

use std::path::Path;
use std::rc::Rc;

use crate::config::{ModelConfig, Phi};
use crate::coverage::{AugmentationConfig, CoverageState, CoverageVars, Layout};
use crate::data::{PaddedSequence, Slot};
use crate::error::{Error, Result};
use crate::news_encoder::{NewsEncoder, TitleBatch};
use crate::nn::Dropout;
use crate::numerics::checkpoint::{load_tensors, save_checkpoint};
use crate::numerics::{Bound, ParamStore, Real, Tape, Tensor, Var};
use crate::training::{diverse_loss, main_loss, total_loss, LossVars};
use crate::user_encoder::{PredictionHead, UserEncoder};
use crate::Rng;
use rand::SeedableRng;

/// Padded sequences of one batch flattened into row indices.
#[derive(Clone, Debug)]
pub struct SequenceBatch {
    pub size: usize,
    pub seq_len: usize,
    /// Per row: index into `[catalog; mask embedding]`, `None` for padding.
    pub slots: Rc<Vec<Option<usize>>>,
    pub key_mask: Vec<bool>,
    pub layout: Layout,
    /// Per row: the item whose vector enters the coverage sums.
    pub coverage_items: Rc<Vec<Option<usize>>>,
    /// Flattened row of every masked slot.
    pub mask_rows: Vec<usize>,
    /// Label per masked row; empty for inference batches.
    pub labels: Rc<Vec<usize>>,
}

impl SequenceBatch {
    pub fn new(seqs: &[PaddedSequence], num_news: usize, seq_len: usize, skip_masked: bool) -> Result<Self> {
        let mut slots = Vec::with_capacity(seqs.len() * seq_len);
        let mut key_mask = Vec::with_capacity(seqs.len() * seq_len);
        let mut ordinals = Vec::with_capacity(seqs.len() * seq_len);
        let mut coverage_items = Vec::with_capacity(seqs.len() * seq_len);
        let mut mask_rows = Vec::new();
        let mut labels = Vec::new();
        for (b, s) in seqs.iter().enumerate() {
            if s.len() != seq_len {
                return Err(Error::Shape(format!("sequence of length {} in a batch of {seq_len}", s.len())));
            }
            for slot in &s.token_slots {
                slots.push(match slot {
                    Slot::Pad => None,
                    Slot::Mask => Some(num_news),
                    Slot::Item(i) if *i < num_news => Some(*i),
                    Slot::Item(i) => return Err(Error::Data(format!("item {i} outside catalog of {num_news}"))),
                });
            }
            key_mask.extend_from_slice(&s.attention_mask);
            ordinals.extend(s.ordinals());
            coverage_items.extend(s.coverage_items(skip_masked));
            mask_rows.extend(s.mask_positions.iter().map(|&p| b * seq_len + p));
            labels.extend_from_slice(&s.labels);
        }
        if !labels.is_empty() && labels.len() != mask_rows.len() {
            return Err(Error::Contract("every masked slot needs a label".into()));
        }
        Ok(Self {
            size: seqs.len(),
            seq_len,
            slots: Rc::new(slots),
            key_mask,
            layout: Layout::new(ordinals, seq_len)?,
            coverage_items: Rc::new(coverage_items),
            mask_rows,
            labels: Rc::new(labels),
        })
    }
}

/// Tape variables of one forward pass.
pub struct ForwardPass<'t, T: Real> {
    pub catalog: Var<'t, T>,
    pub outputs: Var<'t, T>,
    pub coverage: CoverageVars<'t, T>,
}

#[derive(Clone, Debug)]
pub struct CoverageRecommender<T: Real = f32> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    pub news: NewsEncoder,
    pub user: UserEncoder,
    pub head: PredictionHead,
    pub num_news: usize,
}

impl<T: Real> CoverageRecommender<T> {
    /// Fresh parameters drawn from a generator seeded with `seed`.
    pub fn new(config: &ModelConfig, vocab_size: usize, num_news: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if num_news == 0 || vocab_size < 2 {
            return Err(Error::Data("model needs a non-empty catalog and vocabulary".into()));
        }
        let mut rng = Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let news = NewsEncoder::new(&mut params, config, vocab_size, &mut rng);
        let user = UserEncoder::new(&mut params, config, &mut rng)?;
        let head = PredictionHead::new(&mut params, config.dim, num_news, &mut rng);
        Ok(Self {
            config: config.clone(),
            params,
            news,
            user,
            head,
            num_news,
        })
    }

    /// Same model with parameters converted to another float type.
    pub fn cast<U: Real>(&self) -> CoverageRecommender<U> {
        CoverageRecommender {
            config: self.config.clone(),
            params: self.params.cast(),
            news: self.news.clone(),
            user: self.user.clone(),
            head: self.head.clone(),
            num_news: self.num_news,
        }
    }

    pub fn phi(&self) -> Phi {
        self.config.phi()
    }

    pub fn augmentation(&self) -> AugmentationConfig {
        AugmentationConfig::from_model(&self.config)
    }

    pub fn titles(&self, titles: &[Vec<usize>]) -> Result<TitleBatch> {
        if titles.len() != self.num_news {
            return Err(Error::Data(format!(
                "catalog has {} titles, model expects {}",
                titles.len(),
                self.num_news
            )));
        }
        TitleBatch::new(titles, self.news.vocab_size)
    }

    pub fn batch(&self, seqs: &[PaddedSequence]) -> Result<SequenceBatch> {
        SequenceBatch::new(seqs, self.num_news, self.config.seq_len, self.config.zero_masked_coverage)
    }

    pub fn encode_catalog_var<'t>(&self, p: &Bound<'t, T>, titles: &TitleBatch, drop: &mut Dropout<'_>) -> Var<'t, T> {
        self.news.encode(p, titles, drop)
    }

    pub fn forward<'t>(
        &self,
        p: &Bound<'t, T>,
        catalog: Var<'t, T>,
        batch: &SequenceBatch,
        drop: &mut Dropout<'_>,
    ) -> ForwardPass<'t, T> {
        let x = self.user.inputs(p, catalog, Rc::clone(&batch.slots));
        let r_cov = catalog.gather_rows(Rc::clone(&batch.coverage_items));
        let coverage = CoverageVars::build(r_cov, &batch.layout, &self.augmentation(), self.phi());
        let outputs = self.user.encode(p, x, &batch.key_mask, &coverage, drop);
        ForwardPass {
            catalog,
            outputs,
            coverage,
        }
    }

    /// Masked-item likelihood, diversity regularizer and their mix.
    pub fn losses<'t>(&self, p: &Bound<'t, T>, fwd: &ForwardPass<'t, T>, batch: &SequenceBatch, gamma: f64) -> LossVars<'t, T> {
        let o = fwd.outputs.select_rows(&batch.mask_rows);
        let logits = self.head.logits(p, o, fwd.catalog);
        let main = main_loss(logits, Rc::clone(&batch.labels));
        let c = fwd.coverage.sum.select_rows(&batch.mask_rows);
        let diverse = diverse_loss(o, c);
        LossVars {
            main,
            diverse,
            total: total_loss(main, diverse, gamma),
        }
    }

    /// Catalog vectors under the current parameters, without dropout.
    pub fn encode_catalog(&self, titles: &TitleBatch) -> Tensor<T> {
        let tape = Tape::new();
        let p = self.params.bind(&tape, false);
        self.news.encode(&p, titles, &mut Dropout::off()).value().as_ref().clone()
    }

    /// Vector of a single title.
    pub fn encode_news(&self, tokens: &[usize]) -> Result<Tensor<T>> {
        let titles = TitleBatch::new(&[tokens.to_vec()], self.news.vocab_size)?;
        let r = self.encode_catalog(&titles);
        Ok(Tensor::vector(r.into_data()))
    }

    /// Deterministic encoder outputs for every slot of `seqs` (`B·N × d`).
    pub fn encode_users(&self, catalog: &Tensor<T>, seqs: &[PaddedSequence]) -> Result<Tensor<T>> {
        let batch = self.batch(seqs)?;
        let tape = Tape::new();
        let p = self.params.bind(&tape, false);
        let fwd = self.forward(&p, tape.constant(catalog.clone()), &batch, &mut Dropout::off());
        Ok(fwd.outputs.value().as_ref().clone())
    }

    /// Encoder output at every masked slot of `seqs`, in batch order.
    pub fn mask_outputs(&self, catalog: &Tensor<T>, seqs: &[PaddedSequence]) -> Result<Tensor<T>> {
        let batch = self.batch(seqs)?;
        let out = self.encode_users(catalog, seqs)?;
        Ok(out.select_rows(&batch.mask_rows))
    }

    /// Coverage views of one sequence as the model sees them.
    pub fn coverage_state(&self, catalog: &Tensor<T>, seq: &PaddedSequence) -> Result<CoverageState<T>> {
        let batch = self.batch(std::slice::from_ref(seq))?;
        let tape = Tape::new();
        let r = tape
            .constant(catalog.clone())
            .gather_rows(Rc::clone(&batch.coverage_items))
            .value();
        CoverageState::new(&r, &batch.layout, &self.augmentation(), self.phi())
    }
}

impl CoverageRecommender<f32> {
    /// Writes the parameters and a manifest holding `manifest`.
    pub fn save(&self, path: &Path, manifest: &str) -> Result<()> {
        save_checkpoint(path, &self.params, manifest)
    }

    /// Replaces the parameters with those stored at `path`.
    pub fn load_params(&mut self, path: &Path) -> Result<()> {
        self.params.load_named(load_tensors(path)?)
    }
}
