//! Coverage-embedded multi-head self-attention over a user's click sequence,
//! stacked transformer blocks, and the catalog-wide prediction head.

use std::rc::Rc;

use crate::config::{Augmentation, Injection, ModelConfig};
use crate::coverage::CoverageVars;
use crate::error::{Error, Result};
use crate::nn::{AttnShape, Dropout, Linear, TransformerBlock};
use crate::numerics::{ops, truncated_normal, Bound, ParamId, ParamStore, Real, Tape, Tensor, Var, INIT_STD};
use crate::Rng;

#[derive(Clone, Debug)]
pub struct UserEncoder {
    pub mask_embedding: ParamId,
    pub positions: ParamId,
    pub blocks: Vec<TransformerBlock>,
    pub head_map: Vec<Option<Augmentation>>,
    pub heads: usize,
    pub dim: usize,
    pub seq_len: usize,
    pub injection: Injection,
    pub eps: f64,
}

impl UserEncoder {
    pub fn new<T: Real>(store: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let d = cfg.dim;
        Ok(Self {
            mask_embedding: store.insert("user.mask_embedding", truncated_normal(&[1, d], INIT_STD, rng)),
            positions: store.insert("user.positions", truncated_normal(&[cfg.seq_len, d], INIT_STD, rng)),
            blocks: (0..cfg.layers)
                .map(|l| TransformerBlock::new(store, &format!("user.block{l}"), d, rng))
                .collect(),
            head_map: cfg.head_assignment()?,
            heads: cfg.heads,
            dim: d,
            seq_len: cfg.seq_len,
            injection: cfg.injection,
            eps: cfg.layer_norm_eps,
        })
    }

    /// Column mask selecting the heads assigned to `a`, tiled over `rows`.
    fn head_columns<T: Real>(&self, a: Augmentation, rows: usize) -> Option<Rc<Vec<T>>> {
        let dh = self.dim / self.heads;
        let row: Vec<T> = (0..self.dim)
            .map(|c| if self.head_map[c / dh] == Some(a) { T::one() } else { T::zero() })
            .collect();
        if row.iter().all(|&v| v == T::zero()) {
            return None;
        }
        let mut out = Vec::with_capacity(rows * self.dim);
        for _ in 0..rows {
            out.extend_from_slice(&row);
        }
        Some(Rc::new(out))
    }

    /// What the designated heads add to their values: the head's averaged
    /// coverage view, projected by the head's value matrix (`Pre`) or added
    /// to the projected values directly (`Post`).
    pub fn coverage_values<'t, T: Real>(
        &self,
        p: &Bound<'t, T>,
        layer: usize,
        cov: &CoverageVars<'t, T>,
    ) -> Option<Var<'t, T>> {
        let wv = p.get(self.blocks[layer].value.w);
        let mut extra: Option<Var<'t, T>> = None;
        for a in Augmentation::ALL {
            let Some(avg) = cov.averaged(a) else { continue };
            let Some(cols) = self.head_columns::<T>(a, avg.rows()) else { continue };
            let src = match self.injection {
                Injection::Pre => avg.matmul(wv),
                Injection::Post => avg,
            };
            let term = src.mul_const(cols);
            extra = Some(extra.map_or(term, |e| e.add(term)));
        }
        extra
    }

    /// One coverage-embedded attention layer (no residual or norm).
    pub fn cma_attention<'t, T: Real>(
        &self,
        p: &Bound<'t, T>,
        layer: usize,
        h: Var<'t, T>,
        key_mask: &[bool],
        cov: &CoverageVars<'t, T>,
    ) -> Var<'t, T> {
        let shape = self.shape(key_mask);
        self.blocks[layer].attend(p, h, shape, self.coverage_values(p, layer, cov))
    }

    fn shape<'m>(&self, key_mask: &'m [bool]) -> AttnShape<'m> {
        AttnShape {
            heads: self.heads,
            group: self.seq_len,
            key_mask,
            eps: self.eps,
        }
    }

    /// Layer-0 input: news vectors (or the mask embedding) plus learned
    /// positions. `slots` index `[catalog; mask]`, `None` for padding.
    pub fn inputs<'t, T: Real>(
        &self,
        p: &Bound<'t, T>,
        catalog: Var<'t, T>,
        slots: Rc<Vec<Option<usize>>>,
    ) -> Var<'t, T> {
        let tape = catalog.tape();
        let table = tape.concat_rows(&[catalog, p.get(self.mask_embedding)]);
        let rows = slots.len();
        let pos_idx: Vec<Option<usize>> = (0..rows).map(|r| Some(r % self.seq_len)).collect();
        let pos = p.get(self.positions).gather_rows(Rc::new(pos_idx));
        table.gather_rows(slots).add(pos)
    }

    /// Runs the stacked blocks: attention, dropout, residual, norm, then
    /// feed-forward, dropout, residual, norm.
    pub fn encode<'t, T: Real>(
        &self,
        p: &Bound<'t, T>,
        x: Var<'t, T>,
        key_mask: &[bool],
        cov: &CoverageVars<'t, T>,
        drop: &mut Dropout<'_>,
    ) -> Var<'t, T> {
        let mut h = drop.apply(x);
        for (l, block) in self.blocks.iter().enumerate() {
            let extra = self.coverage_values(p, l, cov);
            h = block.forward(p, h, self.shape(key_mask), extra, drop);
        }
        h
    }
}

/// `GELU(o·M^p + b^p)·Rᵀ + b^o`, scored against catalog vectors `R`.
#[derive(Clone, Debug)]
pub struct PredictionHead {
    pub projection: Linear,
    pub output_bias: ParamId,
}

impl PredictionHead {
    pub fn new<T: Real>(store: &mut ParamStore<T>, dim: usize, num_news: usize, rng: &mut Rng) -> Self {
        Self {
            projection: Linear::new(store, "head.projection", dim, dim, rng),
            output_bias: store.insert("head.output_bias", Tensor::zeros(&[num_news])),
        }
    }

    /// Catalog-wide logits for each row of `outputs`.
    pub fn logits<'t, T: Real>(&self, p: &Bound<'t, T>, outputs: Var<'t, T>, catalog: Var<'t, T>) -> Var<'t, T> {
        self.projection
            .forward(p, outputs)
            .gelu()
            .matmul_t(catalog)
            .add_bias(p.get(self.output_bias))
    }

    /// Projected user vector `GELU(o·M^p + b^p)` for each row of `outputs`.
    pub fn query<T: Real>(&self, params: &ParamStore<T>, outputs: &Tensor<T>) -> Tensor<T> {
        let tape = Tape::new();
        let p = params.bind(&tape, false);
        self.projection
            .forward(&p, tape.constant(outputs.clone()))
            .gelu()
            .value()
            .as_ref()
            .clone()
    }

    /// Unnormalized scores of `candidates` for one projected user vector.
    pub fn candidate_logits<T: Real>(
        &self,
        params: &ParamStore<T>,
        query: &[T],
        catalog: &Tensor<T>,
        candidates: &[usize],
    ) -> Result<Vec<T>> {
        if candidates.is_empty() {
            return Err(Error::Contract("no candidates to score".into()));
        }
        let bias = params.value(self.output_bias).data();
        candidates
            .iter()
            .map(|&c| {
                if c >= catalog.rows() {
                    return Err(Error::Data(format!("candidate {c} outside catalog of {}", catalog.rows())));
                }
                let dot: T = catalog.row(c).iter().zip(query).map(|(&a, &b)| a * b).sum();
                Ok(dot + bias[c])
            })
            .collect()
    }

    /// Softmax over exactly `candidates` for the output vector `output`.
    pub fn score_candidates<T: Real>(
        &self,
        params: &ParamStore<T>,
        output: &[T],
        catalog: &Tensor<T>,
        candidates: &[usize],
    ) -> Result<Vec<T>> {
        let o = Tensor::new(vec![1, output.len()], output.to_vec())?;
        let q = self.query(params, &o);
        let logits = self.candidate_logits(params, q.data(), catalog, candidates)?;
        Ok(ops::softmax(&Tensor::vector(logits)).into_data())
    }
}
