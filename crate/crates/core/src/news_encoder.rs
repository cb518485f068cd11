//! Title encoder: word embeddings, a projection to the model width, fixed
//! sinusoidal positions, transformer layers with padding masked out, and
//! additive-attention pooling into one vector per article.

use std::collections::HashMap;
use std::path::Path;
use std::rc::Rc;

use crate::config::ModelConfig;
use crate::data::{Vocab, PAD_TOKEN};
use crate::error::{Error, Result};
use crate::nn::{sinusoidal_positions, AttnShape, Dropout, Linear, TransformerBlock};
use crate::numerics::{truncated_normal, Bound, ParamId, ParamStore, Real, Tensor, Var, INIT_STD};
use crate::Rng;

/// Word vectors start at unit scale, like pretrained vectors, so title
/// content is not drowned out by the fixed position encoding.
pub const WORD_INIT_STD: f64 = 1.0;

/// Titles padded to a common length, laid out row-major (`count × len`).
#[derive(Clone, Debug)]
pub struct TitleBatch {
    /// Token per slot; `None` for padding.
    pub tokens: Rc<Vec<Option<usize>>>,
    pub mask: Vec<bool>,
    pub len: usize,
    pub count: usize,
}

impl TitleBatch {
    pub fn new(titles: &[Vec<usize>], vocab_size: usize) -> Result<Self> {
        let len = titles.iter().map(Vec::len).max().unwrap_or(0).max(1);
        let mut tokens = Vec::with_capacity(titles.len() * len);
        for (i, title) in titles.iter().enumerate() {
            for &tok in title {
                if tok >= vocab_size {
                    return Err(Error::Data(format!("title {i}: token {tok} outside vocabulary of {vocab_size}")));
                }
                tokens.push((tok != PAD_TOKEN).then_some(tok));
            }
            tokens.extend(std::iter::repeat_n(None, len - title.len()));
        }
        let mask = tokens.iter().map(Option::is_some).collect();
        Ok(Self {
            tokens: Rc::new(tokens),
            mask,
            len,
            count: titles.len(),
        })
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        let mut tokens = Vec::with_capacity(rows.len() * self.len);
        for &r in rows {
            tokens.extend_from_slice(&self.tokens[r * self.len..(r + 1) * self.len]);
        }
        let mask = tokens.iter().map(Option::is_some).collect();
        Self {
            tokens: Rc::new(tokens),
            mask,
            len: self.len,
            count: rows.len(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct NewsEncoder {
    pub word_embedding: ParamId,
    pub projection: Linear,
    pub blocks: Vec<TransformerBlock>,
    pub pool: Linear,
    pub pool_query: ParamId,
    pub heads: usize,
    pub dim: usize,
    pub word_dim: usize,
    pub vocab_size: usize,
    pub eps: f64,
}

impl NewsEncoder {
    pub fn new<T: Real>(store: &mut ParamStore<T>, cfg: &ModelConfig, vocab_size: usize, rng: &mut Rng) -> Self {
        let d = cfg.dim;
        Self {
            word_embedding: store.insert(
                "news.word_embedding",
                truncated_normal(&[vocab_size, cfg.word_dim], WORD_INIT_STD, rng),
            ),
            projection: Linear::new(store, "news.projection", cfg.word_dim, d, rng),
            blocks: (0..cfg.news_layers)
                .map(|l| TransformerBlock::new(store, &format!("news.block{l}"), d, rng))
                .collect(),
            pool: Linear::new(store, "news.pool", d, d, rng),
            pool_query: store.insert("news.pool_query", truncated_normal(&[d, 1], INIT_STD, rng)),
            heads: cfg.news_heads,
            dim: d,
            word_dim: cfg.word_dim,
            vocab_size,
            eps: cfg.layer_norm_eps,
        }
    }

    /// Token embeddings of one title (`len × word_dim`); `[PAD]` rows are zero.
    pub fn embed_tokens<T: Real>(&self, params: &ParamStore<T>, tokens: &[usize]) -> Result<Tensor<T>> {
        let table = params.value(self.word_embedding);
        let mut data = Vec::with_capacity(tokens.len() * self.word_dim);
        for &t in tokens {
            if t >= self.vocab_size {
                return Err(Error::Data(format!("token {t} outside vocabulary of {}", self.vocab_size)));
            }
            if t == PAD_TOKEN {
                data.extend(std::iter::repeat_n(T::zero(), self.word_dim));
            } else {
                data.extend_from_slice(table.row(t));
            }
        }
        Tensor::new(vec![tokens.len(), self.word_dim], data)
    }

    /// Encodes every title of `titles` into a `count × dim` matrix.
    pub fn encode<'t, T: Real>(&self, p: &Bound<'t, T>, titles: &TitleBatch, drop: &mut Dropout<'_>) -> Var<'t, T> {
        let words = p.get(self.word_embedding).gather_rows(Rc::clone(&titles.tokens));
        let tape = words.tape();
        let len = titles.len;
        let table: Tensor<T> = sinusoidal_positions(len, self.dim);
        let mut pos = Vec::with_capacity(titles.count * len * self.dim);
        for _ in 0..titles.count {
            pos.extend_from_slice(table.data());
        }
        let positions = tape.constant(Tensor::new(vec![titles.count * len, self.dim], pos).expect("shape"));
        let scale = T::from_f64_lossy((self.dim as f64).sqrt());
        let mut h = drop.apply(self.projection.forward(p, words).scale(scale).add(positions));
        let shape = AttnShape {
            heads: self.heads,
            group: len,
            key_mask: &titles.mask,
            eps: self.eps,
        };
        for block in &self.blocks {
            h = block.forward(p, h, shape, None, drop);
        }
        let scores = self.pool.forward(p, h).tanh().matmul(p.get(self.pool_query));
        let weights = scores.group_softmax(len, &titles.mask);
        h.group_weighted_sum(weights, len)
    }

    /// Overwrites embedding rows with vectors from a whitespace-separated
    /// `word v1 … vD` file. Returns how many vocabulary words were found.
    pub fn load_pretrained<T: Real>(&self, params: &mut ParamStore<T>, vocab: &Vocab, path: &Path) -> Result<usize> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut found: HashMap<usize, Vec<T>> = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let Some(idx) = vocab.get(word) else { continue };
            let vals: Vec<T> = parts
                .map(|v| v.parse::<f64>().map(T::from_f64_lossy))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
            if vals.len() != self.word_dim {
                return Err(Error::Data(format!(
                    "{}:{}: expected {} values, got {}",
                    path.display(),
                    lineno + 1,
                    self.word_dim,
                    vals.len()
                )));
            }
            found.insert(idx, vals);
        }
        let table = params.value_mut(self.word_embedding);
        for (&idx, vals) in &found {
            table.row_mut(idx).copy_from_slice(vals);
        }
        Ok(found.len())
    }
}
