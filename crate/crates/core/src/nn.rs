//! Building blocks shared by the news and user encoders.

use crate::numerics::{truncated_normal, Bound, ParamId, ParamStore, Real, Tensor, Var, INIT_STD};
use crate::Rng;

/// Dropout switch threaded through a forward pass. Without a generator the
/// pass is deterministic and dropout is the identity.
pub struct Dropout<'r> {
    rate: f64,
    rng: Option<&'r mut Rng>,
}

impl<'r> Dropout<'r> {
    pub fn off() -> Self {
        Self { rate: 0.0, rng: None }
    }

    pub fn train(rate: f64, rng: &'r mut Rng) -> Self {
        Self { rate, rng: Some(rng) }
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    pub fn apply<'t, T: Real>(&mut self, x: Var<'t, T>) -> Var<'t, T> {
        match self.rng.as_deref_mut() {
            Some(rng) if self.rate > 0.0 => x.dropout(self.rate, rng),
            _ => x,
        }
    }
}

/// `x·W + b` with `W` stored `in×out`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        Self {
            w: store.insert(&format!("{name}.w"), truncated_normal(&[fan_in, fan_out], INIT_STD, rng)),
            b: store.insert(&format!("{name}.b"), Tensor::zeros(&[fan_out])),
        }
    }

    pub fn forward<'t, T: Real>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Var<'t, T> {
        x.linear(p.get(self.w), p.get(self.b))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, dim: usize) -> Self {
        Self {
            gain: store.insert(&format!("{name}.gain"), Tensor::full(&[dim], T::one())),
            bias: store.insert(&format!("{name}.bias"), Tensor::zeros(&[dim])),
        }
    }

    pub fn forward<'t, T: Real>(&self, p: &Bound<'t, T>, x: Var<'t, T>, eps: f64) -> Var<'t, T> {
        x.layer_norm(p.get(self.gain), p.get(self.bias), T::from_f64_lossy(eps))
    }
}

/// Post-norm transformer layer: attention and a GELU feed-forward of width
/// `4·dim`, each followed by dropout, a residual and layer norm.
#[derive(Clone, Debug)]
pub struct TransformerBlock {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub out: Linear,
    pub norm1: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub norm2: LayerNorm,
}

/// Shape of one attention call: rows come in `group`-sized sequences.
#[derive(Clone, Copy, Debug)]
pub struct AttnShape<'m> {
    pub heads: usize,
    pub group: usize,
    pub key_mask: &'m [bool],
    pub eps: f64,
}

impl TransformerBlock {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, dim: usize, rng: &mut Rng) -> Self {
        Self {
            query: Linear::new(store, &format!("{name}.query"), dim, dim, rng),
            key: Linear::new(store, &format!("{name}.key"), dim, dim, rng),
            value: Linear::new(store, &format!("{name}.value"), dim, dim, rng),
            out: Linear::new(store, &format!("{name}.out"), dim, dim, rng),
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), dim),
            ff1: Linear::new(store, &format!("{name}.ff1"), dim, 4 * dim, rng),
            ff2: Linear::new(store, &format!("{name}.ff2"), 4 * dim, dim, rng),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), dim),
        }
    }

    /// Multi-head self-attention with output projection. `value_extra` is
    /// added to the projected values before attending.
    pub fn attend<'t, T: Real>(
        &self,
        p: &Bound<'t, T>,
        x: Var<'t, T>,
        shape: AttnShape<'_>,
        value_extra: Option<Var<'t, T>>,
    ) -> Var<'t, T> {
        let q = self.query.forward(p, x);
        let k = self.key.forward(p, x);
        let mut v = self.value.forward(p, x);
        if let Some(extra) = value_extra {
            v = v.add(extra);
        }
        let ctx = q.attention(k, v, shape.heads, shape.group, shape.key_mask);
        self.out.forward(p, ctx)
    }

    pub fn feed_forward<'t, T: Real>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Var<'t, T> {
        self.ff2.forward(p, self.ff1.forward(p, x).gelu())
    }

    pub fn forward<'t, T: Real>(
        &self,
        p: &Bound<'t, T>,
        x: Var<'t, T>,
        shape: AttnShape<'_>,
        value_extra: Option<Var<'t, T>>,
        drop: &mut Dropout<'_>,
    ) -> Var<'t, T> {
        let a = drop.apply(self.attend(p, x, shape, value_extra));
        let y = self.norm1.forward(p, x.add(a), shape.eps);
        let f = drop.apply(self.feed_forward(p, y));
        self.norm2.forward(p, y.add(f), shape.eps)
    }
}

/// Fixed sinusoidal position table, `len × dim`: `sin` on even columns and
/// `cos` on odd ones with wavelengths growing geometrically up to 10000.
pub fn sinusoidal_positions<T: Real>(len: usize, dim: usize) -> Tensor<T> {
    let mut data = Vec::with_capacity(len * dim);
    for pos in 0..len {
        for a in 0..dim {
            let rate = 10_000f64.powf((a - a % 2) as f64 / dim as f64);
            let angle = pos as f64 / rate;
            data.push(T::from_f64_lossy(if a % 2 == 0 { angle.sin() } else { angle.cos() }));
        }
    }
    Tensor::new(vec![len, dim], data).expect("shape")
}
