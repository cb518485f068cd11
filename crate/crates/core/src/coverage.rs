//! Running coverage of clicked-news vectors and its four augmented views.
//!
//! Positions are described by their ordinal among non-pad slots (1-based,
//! 0 for padding), so padding neither advances the click count nor shifts
//! phases. Everything is computed with tape operations so the same code serves
//! training (gradients flow back into the news encoder) and the plain-tensor
//! helpers below.

use std::rc::Rc;

use crate::config::{Augmentation, CircleOdd, ModelConfig, Phi};
use crate::error::{Error, Result};
use crate::numerics::{Real, Tape, Tensor, Var};

/// Fixed hyperparameters of the augmentations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentationConfig {
    /// Decay factor η in [0, 1].
    pub eta: f64,
    /// Wavelength scale of the Circle and Log views.
    pub freq: f64,
    /// Gamma scale β.
    pub beta: f64,
    pub circle_odd: CircleOdd,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            eta: 0.9,
            freq: 10_000.0,
            beta: 1.0,
            circle_odd: CircleOdd::Cos,
        }
    }
}

impl AugmentationConfig {
    pub fn from_model(cfg: &ModelConfig) -> Self {
        Self {
            eta: cfg.eta,
            freq: cfg.freq,
            beta: cfg.beta,
            circle_odd: cfg.circle_odd,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) || !(self.freq > 0.0) || !(self.beta > 0.0) {
            return Err(Error::Config(format!("invalid augmentation settings {self:?}")));
        }
        Ok(())
    }
}

/// Shift added to rows with negative entries before the Log view.
pub const LOG_SHIFT_EPS: f64 = 1e-6;

/// 1-based ordinals of the `true` entries of `mask`, 0 elsewhere.
pub fn ordinals_from_mask(mask: &[bool]) -> Vec<usize> {
    let mut k = 0;
    mask.iter()
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

/// Ordinal layout of a batch of `group`-row sequences stacked vertically.
#[derive(Clone, Debug)]
pub struct Layout {
    pub ordinals: Vec<usize>,
    pub group: usize,
}

impl Layout {
    pub fn new(ordinals: Vec<usize>, group: usize) -> Result<Self> {
        if group == 0 || ordinals.len() % group != 0 {
            return Err(Error::Shape(format!(
                "{} ordinals do not split into sequences of {group}",
                ordinals.len()
            )));
        }
        Ok(Self { ordinals, group })
    }

    /// One unpadded sequence of `n` rows.
    pub fn dense(n: usize) -> Self {
        Self {
            ordinals: (1..=n).collect(),
            group: n.max(1),
        }
    }

    fn rows(&self) -> usize {
        self.ordinals.len()
    }

    /// Per-sequence `group×group` matrices with `weight(ord_i, ord_j)` at
    /// `j ≤ i` when both slots are real, zero elsewhere.
    fn lower_blocks<T: Real>(&self, weight: impl Fn(usize, usize) -> f64) -> Rc<Vec<Tensor<T>>> {
        let t = self.group;
        let blocks = self
            .ordinals
            .chunks(t)
            .map(|ords| {
                let mut m = vec![T::zero(); t * t];
                for i in 0..t {
                    for j in 0..=i {
                        if ords[i] > 0 && ords[j] > 0 {
                            m[i * t + j] = T::from_f64_lossy(weight(ords[i], ords[j]));
                        }
                    }
                }
                Tensor::new(vec![t, t], m).expect("square block")
            })
            .collect();
        Rc::new(blocks)
    }

    /// Row-constant buffer of `f(ordinal)` over a `rows × dim` matrix.
    fn row_buffer<T: Real>(&self, dim: usize, f: impl Fn(usize) -> f64) -> Rc<Vec<T>> {
        let mut out = Vec::with_capacity(self.rows() * dim);
        for &o in &self.ordinals {
            let v = T::from_f64_lossy(f(o));
            out.extend(std::iter::repeat_n(v, dim));
        }
        Rc::new(out)
    }
}

/// `freq^(a/dim)` for every column `a`.
fn column_scales<T: Real>(freq: f64, dim: usize) -> Vec<T> {
    (0..dim)
        .map(|a| T::from_f64_lossy(freq.powf(a as f64 / dim as f64)))
        .collect()
}

/// Prefix sums over real slots: `c_i = c_{i−1} + r_i`.
pub fn coverage_var<'t, T: Real>(r: Var<'t, T>, layout: &Layout) -> Var<'t, T> {
    r.block_matmul(layout.lower_blocks(|_, _| 1.0))
}

/// `Σ_{j≤i} η^(i−j) r_j` with `i, j` counted in real slots.
pub fn decay_var<'t, T: Real>(r: Var<'t, T>, layout: &Layout, eta: f64) -> Var<'t, T> {
    r.block_matmul(layout.lower_blocks(|i, j| eta.powi((i - j) as i32)))
}

/// `sin(c_a·i / freq^(a/d))` on even columns, `cos` (or `sin`) on odd ones;
/// padding rows are zero.
pub fn circle_var<'t, T: Real>(c: Var<'t, T>, layout: &Layout, freq: f64, odd: CircleOdd) -> Var<'t, T> {
    let dim = c.cols();
    let scales: Vec<T> = column_scales(freq, dim);
    let mut phase = Vec::with_capacity(layout.rows() * dim);
    for &o in &layout.ordinals {
        let i = T::from_usize(o).unwrap();
        phase.extend(scales.iter().map(|&s| i / s));
    }
    let x = c.mul_const(Rc::new(phase));
    let waves = match odd {
        CircleOdd::Cos => x.alt_sin_cos(),
        CircleOdd::Sin => x.sin(),
    };
    waves.mul_const(layout.row_buffer(dim, |o| if o > 0 { 1.0 } else { 0.0 }))
}

/// `ln(1 + c_a / freq^(a/d))`, rows with negative entries shifted first.
pub fn log_var<'t, T: Real>(c: Var<'t, T>, freq: f64) -> Var<'t, T> {
    let dim = c.cols();
    c.log_shift(Rc::new(column_scales(freq, dim)), T::from_f64_lossy(LOG_SHIFT_EPS))
}

/// `βc·e^(−βc)` for positive entries, zero otherwise.
pub fn gamma_var<T: Real>(c: Var<'_, T>, beta: f64) -> Var<'_, T> {
    c.gamma_response(T::from_f64_lossy(beta))
}

/// Row `i` divided by its ordinal; padding rows stay zero.
pub fn average_var<'t, T: Real>(x: Var<'t, T>, layout: &Layout) -> Var<'t, T> {
    let dim = x.cols();
    x.mul_const(layout.row_buffer(dim, |o| if o > 0 { 1.0 / o as f64 } else { 0.0 }))
}

/// The coverage views of a batch, as tape variables. Disabled views are not
/// computed.
pub struct CoverageVars<'t, T: Real> {
    pub raw: Var<'t, T>,
    views: [Option<Var<'t, T>>; 4],
    averaged: [Option<Var<'t, T>>; 4],
    /// `C + Σ Φ_x·C^x` over un-averaged views.
    pub sum: Var<'t, T>,
}

fn slot(a: Augmentation) -> usize {
    match a {
        Augmentation::Decay => 0,
        Augmentation::Circle => 1,
        Augmentation::Log => 2,
        Augmentation::Gamma => 3,
    }
}

impl<'t, T: Real> CoverageVars<'t, T> {
    /// `r` holds the news vector of every slot, zero rows where nothing was
    /// clicked.
    pub fn build(r: Var<'t, T>, layout: &Layout, aug: &AugmentationConfig, phi: Phi) -> Self {
        let raw = coverage_var(r, layout);
        let mut views = [None; 4];
        let mut averaged = [None; 4];
        let mut sum = raw;
        for a in Augmentation::ALL {
            if !phi.get(a) {
                continue;
            }
            let v = match a {
                Augmentation::Decay => decay_var(r, layout, aug.eta),
                Augmentation::Circle => circle_var(raw, layout, aug.freq, aug.circle_odd),
                Augmentation::Log => log_var(raw, aug.freq),
                Augmentation::Gamma => gamma_var(raw, aug.beta),
            };
            sum = sum.add(v);
            views[slot(a)] = Some(v);
            averaged[slot(a)] = Some(average_var(v, layout));
        }
        Self {
            raw,
            views,
            averaged,
            sum,
        }
    }

    pub fn view(&self, a: Augmentation) -> Option<Var<'t, T>> {
        self.views[slot(a)]
    }

    pub fn averaged(&self, a: Augmentation) -> Option<Var<'t, T>> {
        self.averaged[slot(a)]
    }
}

/// Plain-tensor snapshot of every view for one or more sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageState<T: Real = f32> {
    pub raw: Tensor<T>,
    pub decay: Tensor<T>,
    pub circle: Tensor<T>,
    pub log: Tensor<T>,
    pub gamma: Tensor<T>,
    pub avg_decay: Tensor<T>,
    pub avg_circle: Tensor<T>,
    pub avg_log: Tensor<T>,
    pub avg_gamma: Tensor<T>,
    pub phi: Phi,
}

impl<T: Real> CoverageState<T> {
    /// Computes all four views regardless of `phi`; `phi` only decides which
    /// of them [`coverage_sum`] adds.
    pub fn new(r: &Tensor<T>, layout: &Layout, aug: &AugmentationConfig, phi: Phi) -> Result<Self> {
        check_rows(r, layout)?;
        let tape = Tape::new();
        let vars = CoverageVars::build(tape.constant(r.clone()), layout, aug, Phi::ALL_ON);
        let get = |v: Option<Var<'_, T>>| v.expect("all views enabled").value().as_ref().clone();
        Ok(Self {
            raw: vars.raw.value().as_ref().clone(),
            decay: get(vars.view(Augmentation::Decay)),
            circle: get(vars.view(Augmentation::Circle)),
            log: get(vars.view(Augmentation::Log)),
            gamma: get(vars.view(Augmentation::Gamma)),
            avg_decay: get(vars.averaged(Augmentation::Decay)),
            avg_circle: get(vars.averaged(Augmentation::Circle)),
            avg_log: get(vars.averaged(Augmentation::Log)),
            avg_gamma: get(vars.averaged(Augmentation::Gamma)),
            phi,
        })
    }

    pub fn view(&self, a: Augmentation) -> &Tensor<T> {
        match a {
            Augmentation::Decay => &self.decay,
            Augmentation::Circle => &self.circle,
            Augmentation::Log => &self.log,
            Augmentation::Gamma => &self.gamma,
        }
    }

    pub fn averaged(&self, a: Augmentation) -> &Tensor<T> {
        match a {
            Augmentation::Decay => &self.avg_decay,
            Augmentation::Circle => &self.avg_circle,
            Augmentation::Log => &self.avg_log,
            Augmentation::Gamma => &self.avg_gamma,
        }
    }
}

fn check_rows<T: Real>(x: &Tensor<T>, layout: &Layout) -> Result<()> {
    if x.rank() != 2 || x.rows() != layout.ordinals.len() {
        return Err(Error::Shape(format!(
            "coverage input {:?} does not match {} slots",
            x.shape(),
            layout.ordinals.len()
        )));
    }
    Ok(())
}

fn run<T: Real>(x: &Tensor<T>, f: impl for<'t> Fn(Var<'t, T>) -> Var<'t, T>) -> Tensor<T> {
    let tape = Tape::new();
    f(tape.constant(x.clone())).value().as_ref().clone()
}

/// Prefix sums of `r` over real slots (padding rows of `r` must be zero).
pub fn coverage_sequence<T: Real>(r: &Tensor<T>, layout: &Layout) -> Result<Tensor<T>> {
    check_rows(r, layout)?;
    Ok(run(r, |v| coverage_var(v, layout)))
}

pub fn decay_encode<T: Real>(r: &Tensor<T>, layout: &Layout, eta: f64) -> Result<Tensor<T>> {
    check_rows(r, layout)?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Config(format!("eta={eta} outside [0, 1]")));
    }
    Ok(run(r, |v| decay_var(v, layout, eta)))
}

pub fn circle_encode<T: Real>(c: &Tensor<T>, layout: &Layout, freq: f64, odd: CircleOdd) -> Result<Tensor<T>> {
    check_rows(c, layout)?;
    Ok(run(c, |v| circle_var(v, layout, freq, odd)))
}

pub fn log_encode<T: Real>(c: &Tensor<T>, freq: f64) -> Tensor<T> {
    run(c, |v| log_var(v, freq))
}

pub fn gamma_encode<T: Real>(c: &Tensor<T>, beta: f64) -> Tensor<T> {
    run(c, |v| gamma_var(v, beta))
}

pub fn position_average<T: Real>(x: &Tensor<T>, layout: &Layout) -> Result<Tensor<T>> {
    check_rows(x, layout)?;
    Ok(run(x, |v| average_var(v, layout)))
}

/// `C + Σ Φ_x·C^x` over the un-averaged views.
pub fn coverage_sum<T: Real>(state: &CoverageState<T>) -> Tensor<T> {
    let mut out = state.raw.clone();
    for a in Augmentation::ALL {
        if state.phi.get(a) {
            let v = state.view(a);
            out.data_mut()
                .iter_mut()
                .zip(v.data())
                .for_each(|(o, &x)| *o = *o + x);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[Vec<f64>]) -> Tensor<f64> {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn prefix_sum_example() {
        let r = t(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0]]);
        let c = coverage_sequence(&r, &Layout::dense(3)).unwrap();
        assert_eq!(c, t(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![3.0, 3.0]]));
    }

    #[test]
    fn padding_does_not_advance_the_count() {
        let layout = Layout::new(ordinals_from_mask(&[false, false, true, true]), 4).unwrap();
        let r = t(&[vec![0.0], vec![0.0], vec![4.0], vec![2.0]]);
        let c = coverage_sequence(&r, &layout).unwrap();
        assert_eq!(c.data(), &[0.0, 0.0, 4.0, 6.0]);
        let avg = position_average(&c, &layout).unwrap();
        assert_eq!(avg.data(), &[0.0, 0.0, 4.0, 3.0]);
        let circ = circle_encode(&c, &layout, 1.0, CircleOdd::Cos).unwrap();
        assert_eq!(&circ.data()[..2], &[0.0, 0.0]);
    }

    #[test]
    fn decay_half_example() {
        let r = t(&[vec![4.0], vec![2.0]]);
        let d = decay_encode(&r, &Layout::dense(2), 0.5).unwrap();
        assert_eq!(d.data(), &[4.0, 4.0]);
    }

    #[test]
    fn decay_extremes() {
        let r = t(&[vec![1.0, -2.0], vec![0.5, 3.0], vec![-1.0, 1.0]]);
        let l = Layout::dense(3);
        assert_eq!(decay_encode(&r, &l, 0.0).unwrap(), r);
        assert_eq!(decay_encode(&r, &l, 1.0).unwrap(), coverage_sequence(&r, &l).unwrap());
    }

    #[test]
    fn circle_of_zero_is_sin0_cos0() {
        let c = Tensor::<f64>::zeros(&[2, 4]);
        let out = circle_encode(&c, &Layout::dense(2), 10_000.0, CircleOdd::Cos).unwrap();
        assert_eq!(out.row(1), &[0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn circle_sine_zero() {
        let c = t(&[vec![std::f64::consts::PI]]);
        let out = circle_encode(&c, &Layout::dense(1), 10_000.0, CircleOdd::Cos).unwrap();
        assert!(out.item().abs() < 1e-6);
    }

    #[test]
    fn log_examples() {
        assert_eq!(log_encode(&t(&[vec![0.0, 0.0]]), 10.0).data(), &[0.0, 0.0]);
        let e1 = t(&[vec![std::f64::consts::E - 1.0]]);
        assert!((log_encode(&e1, 10.0).item() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_peak() {
        let beta = 2.5;
        let g = gamma_encode(&t(&[vec![1.0 / beta, 0.0, -3.0]]), beta);
        assert!((g.data()[0] - (-1f64).exp()).abs() < 1e-12);
        assert_eq!(&g.data()[1..], &[0.0, 0.0]);
    }

    #[test]
    fn sum_with_all_views_on_zero_input() {
        let state = CoverageState::new(
            &Tensor::<f64>::zeros(&[2, 4]),
            &Layout::dense(2),
            &AugmentationConfig::default(),
            Phi::ALL_ON,
        )
        .unwrap();
        let s = coverage_sum(&state);
        assert_eq!(s.row(0), &[0.0, 1.0, 0.0, 1.0]);
        let off = CoverageState { phi: Phi::ALL_OFF, ..state };
        assert_eq!(coverage_sum(&off), off.raw);
    }
}
