//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation on a [`Var`] evaluates eagerly, appends a node holding its
//! value and whatever the backward pass needs, and returns a handle to the new
//! node. [`Tape::backward`] walks the nodes in reverse and accumulates
//! vector-Jacobian products. Nodes are never mutated after creation.

use std::cell::RefCell;
use std::rc::Rc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::real::matmul_raw;
use crate::numerics::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
enum Unary<T> {
    Gelu,
    Tanh,
    Sin,
    Cos,
    Exp,
    /// `sin` on even columns, `cos` on odd columns.
    AltSinCos,
    /// `βx·exp(−βx)` for `x > 0`, zero otherwise.
    Gamma(T),
}

enum Op<T: Real> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddBias(usize, usize),
    MulConst(usize, Rc<Vec<T>>),
    Scale(usize, T),
    MatMul {
        a: usize,
        b: usize,
        ta: bool,
        tb: bool,
    },
    Map(usize, Unary<T>),
    LogShift {
        x: usize,
        col_div: Rc<Vec<T>>,
        shifts: Vec<T>,
        argmin: Vec<Option<usize>>,
    },
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Softmax(usize),
    LogSoftmax(usize),
    Gather {
        src: usize,
        idx: Rc<Vec<Option<usize>>>,
    },
    Concat(Vec<usize>),
    Attention {
        q: usize,
        k: usize,
        v: usize,
        group: usize,
        heads: usize,
        scale: T,
        probs: Vec<T>,
    },
    GroupSoftmax(usize, usize),
    GroupWeightedSum {
        h: usize,
        w: usize,
        group: usize,
    },
    BlockMatMul {
        x: usize,
        blocks: Rc<Vec<Tensor<T>>>,
    },
    Sum(usize),
    Mean(usize),
    PickRows(usize, Rc<Vec<usize>>),
    RowNormalize {
        x: usize,
        eps: T,
        norms: Vec<T>,
    },
    RowSumSq(usize),
}

struct Node<T: Real> {
    value: Rc<Tensor<T>>,
    op: Op<T>,
    needs_grad: bool,
}

/// Recording of one forward computation.
pub struct Tape<T: Real = f32> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T: Real = f32> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T: Real> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by node.
pub struct Gradients<T: Real> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of the loss with respect to `var`; `None` when the loss does
    /// not depend on it or it does not require gradients.
    pub fn get(&self, var: Var<'_, T>) -> Option<Tensor<T>> {
        self.get_by_id(var.id)
    }

    pub(crate) fn get_by_id(&self, id: usize) -> Option<Tensor<T>> {
        let g = self.grads.get(id)?.as_ref()?;
        Some(Tensor::new(self.shapes[id].clone(), g.clone()).expect("gradient shape"))
    }

    pub(crate) fn raw(&self, id: usize) -> Option<&[T]> {
        self.grads.get(id)?.as_deref()
    }
}

fn add_into<T: Real>(dst: &mut Option<Vec<T>>, src: Vec<T>) {
    match dst {
        Some(d) => d.iter_mut().zip(src).for_each(|(a, b)| *a = *a + b),
        None => *dst = Some(src),
    }
}

fn gelu_cdf<T: Real>(x: T) -> T {
    let half = T::from_f64_lossy(0.5);
    half * (T::one() + (x / T::from_f64_lossy(std::f64::consts::SQRT_2)).erf())
}

fn gelu_pdf<T: Real>(x: T) -> T {
    let inv_sqrt_2pi = T::from_f64_lossy(0.398_942_280_401_432_7);
    inv_sqrt_2pi * (-(x * x) * T::from_f64_lossy(0.5)).exp()
}

impl<T: Real> Unary<T> {
    fn forward(self, x: T, col: usize) -> T {
        match self {
            Unary::Gelu => x * gelu_cdf(x),
            Unary::Tanh => x.tanh(),
            Unary::Sin => x.sin(),
            Unary::Cos => x.cos(),
            Unary::Exp => x.exp(),
            Unary::AltSinCos => {
                if col % 2 == 0 {
                    x.sin()
                } else {
                    x.cos()
                }
            }
            Unary::Gamma(beta) => {
                if x > T::zero() {
                    beta * x * (-beta * x).exp()
                } else {
                    T::zero()
                }
            }
        }
    }

    fn derivative(self, x: T, y: T, col: usize) -> T {
        match self {
            Unary::Gelu => gelu_cdf(x) + x * gelu_pdf(x),
            Unary::Tanh => T::one() - y * y,
            Unary::Sin => x.cos(),
            Unary::Cos => -x.sin(),
            Unary::Exp => y,
            Unary::AltSinCos => {
                if col % 2 == 0 {
                    x.cos()
                } else {
                    -x.sin()
                }
            }
            Unary::Gamma(beta) => {
                if x > T::zero() {
                    beta * (-beta * x).exp() * (T::one() - beta * x)
                } else {
                    T::zero()
                }
            }
        }
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            needs_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value_of(&self, id: usize) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes.borrow()[id].needs_grad
    }

    /// A leaf whose gradient is tracked.
    pub fn param(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, false)
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn concat_rows<'t>(&'t self, parts: &[Var<'t, T>]) -> Var<'t, T> {
        assert!(!parts.is_empty(), "concat of nothing");
        let cols = parts[0].value().cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let v = p.value();
            assert_eq!(v.cols(), cols, "concat_rows column mismatch");
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let needs = parts.iter().any(|p| self.needs(p.id));
        let out = Tensor::new(vec![rows, cols], data).expect("concat shape");
        self.push(out, Op::Concat(parts.iter().map(|p| p.id).collect()), needs)
    }

    /// Reverse pass from a scalar loss.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(vec![T::one()]);

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            backprop_node(&nodes, id, &g, &mut grads);
            grads[id] = Some(g);
        }
        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn backprop_node<T: Real>(nodes: &[Node<T>], id: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
    let node = &nodes[id];
    let val = |i: usize| -> &Tensor<T> { &nodes[i].value };
    let need = |i: usize| nodes[i].needs_grad;
    let out = &node.value;

    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            if need(*a) {
                add_into(&mut grads[*a], g.to_vec());
            }
            if need(*b) {
                add_into(&mut grads[*b], g.to_vec());
            }
        }
        Op::Sub(a, b) => {
            if need(*a) {
                add_into(&mut grads[*a], g.to_vec());
            }
            if need(*b) {
                add_into(&mut grads[*b], g.iter().map(|&v| -v).collect());
            }
        }
        Op::Mul(a, b) => {
            let (av, bv) = (val(*a).data(), val(*b).data());
            if need(*a) {
                add_into(&mut grads[*a], g.iter().zip(bv).map(|(&g, &b)| g * b).collect());
            }
            if need(*b) {
                add_into(&mut grads[*b], g.iter().zip(av).map(|(&g, &a)| g * a).collect());
            }
        }
        Op::AddBias(x, b) => {
            if need(*x) {
                add_into(&mut grads[*x], g.to_vec());
            }
            if need(*b) {
                let c = val(*b).numel();
                let mut db = vec![T::zero(); c];
                for row in g.chunks(c) {
                    db.iter_mut().zip(row).for_each(|(d, &v)| *d = *d + v);
                }
                add_into(&mut grads[*b], db);
            }
        }
        Op::MulConst(x, c) => {
            if need(*x) {
                add_into(&mut grads[*x], g.iter().zip(c.iter()).map(|(&g, &c)| g * c).collect());
            }
        }
        Op::Scale(x, s) => {
            if need(*x) {
                add_into(&mut grads[*x], g.iter().map(|&g| g * *s).collect());
            }
        }
        Op::MatMul { a, b, ta, tb } => {
            let (av, bv) = (val(*a), val(*b));
            let (ar, ac) = av.dims2();
            let (br, bc) = bv.dims2();
            let (m, n) = out.dims2();
            if need(*a) {
                // d op(A) = G · op(B)ᵀ
                let da = if *ta {
                    // A = op(A)ᵀ → dA = op(B) · Gᵀ
                    matmul_raw(bv.data(), br, bc, *tb, g, m, n, true).0
                } else {
                    matmul_raw(g, m, n, false, bv.data(), br, bc, !*tb).0
                };
                add_into(&mut grads[*a], da);
            }
            if need(*b) {
                // d op(B) = op(A)ᵀ · G
                let db = if *tb {
                    matmul_raw(g, m, n, true, av.data(), ar, ac, *ta).0
                } else {
                    matmul_raw(av.data(), ar, ac, !*ta, g, m, n, false).0
                };
                add_into(&mut grads[*b], db);
            }
        }
        Op::Map(x, f) => {
            if need(*x) {
                let xv = val(*x);
                let cols = xv.cols().max(1);
                let dx = xv
                    .data()
                    .iter()
                    .zip(out.data())
                    .zip(g)
                    .enumerate()
                    .map(|(i, ((&x, &y), &g))| g * f.derivative(x, y, i % cols))
                    .collect();
                add_into(&mut grads[*x], dx);
            }
        }
        Op::LogShift {
            x,
            col_div,
            shifts,
            argmin,
        } => {
            if need(*x) {
                let xv = val(*x);
                let cols = xv.cols();
                let mut dx = vec![T::zero(); xv.numel()];
                for (r, (xr, gr)) in xv.data().chunks(cols).zip(g.chunks(cols)).enumerate() {
                    let s = shifts[r];
                    let mut total = T::zero();
                    for a in 0..cols {
                        let d = gr[a] / (col_div[a] + xr[a] + s);
                        dx[r * cols + a] = d;
                        total = total + d;
                    }
                    if let Some(a) = argmin[r] {
                        dx[r * cols + a] = dx[r * cols + a] - total;
                    }
                }
                add_into(&mut grads[*x], dx);
            }
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            inv_std,
        } => {
            let gv = val(*gain).data();
            let cols = gv.len();
            let nf = T::from_usize(cols).unwrap();
            if need(*x) {
                let mut dx = vec![T::zero(); g.len()];
                for (r, (gr, hr)) in g.chunks(cols).zip(xhat.chunks(cols)).enumerate() {
                    let dxhat: Vec<T> = gr.iter().zip(gv).map(|(&g, &w)| g * w).collect();
                    let s1: T = dxhat.iter().copied().sum();
                    let s2: T = dxhat.iter().zip(hr).map(|(&d, &h)| d * h).sum();
                    let scale = inv_std[r] / nf;
                    for a in 0..cols {
                        dx[r * cols + a] = scale * (nf * dxhat[a] - s1 - hr[a] * s2);
                    }
                }
                add_into(&mut grads[*x], dx);
            }
            if need(*gain) {
                let mut dg = vec![T::zero(); cols];
                for (gr, hr) in g.chunks(cols).zip(xhat.chunks(cols)) {
                    for a in 0..cols {
                        dg[a] = dg[a] + gr[a] * hr[a];
                    }
                }
                add_into(&mut grads[*gain], dg);
            }
            if need(*bias) {
                let mut db = vec![T::zero(); cols];
                for gr in g.chunks(cols) {
                    db.iter_mut().zip(gr).for_each(|(d, &v)| *d = *d + v);
                }
                add_into(&mut grads[*bias], db);
            }
        }
        Op::Softmax(x) => {
            if need(*x) {
                let cols = out.cols();
                let mut dx = Vec::with_capacity(g.len());
                for (yr, gr) in out.data().chunks(cols).zip(g.chunks(cols)) {
                    let dot: T = yr.iter().zip(gr).map(|(&y, &g)| y * g).sum();
                    dx.extend(yr.iter().zip(gr).map(|(&y, &g)| y * (g - dot)));
                }
                add_into(&mut grads[*x], dx);
            }
        }
        Op::LogSoftmax(x) => {
            if need(*x) {
                let cols = out.cols();
                let mut dx = Vec::with_capacity(g.len());
                for (yr, gr) in out.data().chunks(cols).zip(g.chunks(cols)) {
                    let gs: T = gr.iter().copied().sum();
                    dx.extend(yr.iter().zip(gr).map(|(&y, &g)| g - y.exp() * gs));
                }
                add_into(&mut grads[*x], dx);
            }
        }
        Op::Gather { src, idx } => {
            if need(*src) {
                let sv = val(*src);
                let cols = sv.cols();
                let mut ds = vec![T::zero(); sv.numel()];
                for (r, i) in idx.iter().enumerate() {
                    if let Some(i) = i {
                        let dst = &mut ds[i * cols..(i + 1) * cols];
                        dst.iter_mut()
                            .zip(&g[r * cols..(r + 1) * cols])
                            .for_each(|(d, &v)| *d = *d + v);
                    }
                }
                add_into(&mut grads[*src], ds);
            }
        }
        Op::Concat(parts) => {
            let mut offset = 0;
            for &p in parts {
                let n = val(p).numel();
                if need(p) {
                    add_into(&mut grads[p], g[offset..offset + n].to_vec());
                }
                offset += n;
            }
        }
        Op::Attention {
            q,
            k,
            v,
            group,
            heads,
            scale,
            probs,
        } => {
            let (qv, kv, vv) = (val(*q).data(), val(*k).data(), val(*v).data());
            let d = out.cols();
            let dh = d / heads;
            let t = *group;
            let groups = out.rows() / t;
            let mut dq = vec![T::zero(); qv.len()];
            let mut dk = vec![T::zero(); kv.len()];
            let mut dv = vec![T::zero(); vv.len()];
            let mut dp = vec![T::zero(); t];
            for gi in 0..groups {
                for h in 0..*heads {
                    let pbase = (gi * heads + h) * t * t;
                    let off = h * dh;
                    for r in 0..t {
                        let orow = (gi * t + r) * d + off;
                        let prow = &probs[pbase + r * t..pbase + (r + 1) * t];
                        let go = &g[orow..orow + dh];
                        for c in 0..t {
                            let vrow = (gi * t + c) * d + off;
                            let p = prow[c];
                            let mut acc = T::zero();
                            for e in 0..dh {
                                acc = acc + go[e] * vv[vrow + e];
                                dv[vrow + e] = dv[vrow + e] + p * go[e];
                            }
                            dp[c] = acc;
                        }
                        let dot: T = prow.iter().zip(&dp).map(|(&p, &d)| p * d).sum();
                        for c in 0..t {
                            let ds = prow[c] * (dp[c] - dot) * *scale;
                            if ds == T::zero() {
                                continue;
                            }
                            let krow = (gi * t + c) * d + off;
                            for e in 0..dh {
                                dq[orow + e] = dq[orow + e] + ds * kv[krow + e];
                                dk[krow + e] = dk[krow + e] + ds * qv[orow + e];
                            }
                        }
                    }
                }
            }
            if need(*q) {
                add_into(&mut grads[*q], dq);
            }
            if need(*k) {
                add_into(&mut grads[*k], dk);
            }
            if need(*v) {
                add_into(&mut grads[*v], dv);
            }
        }
        Op::GroupSoftmax(x, group) => {
            if need(*x) {
                let mut dx = Vec::with_capacity(g.len());
                for (yr, gr) in out.data().chunks(*group).zip(g.chunks(*group)) {
                    let dot: T = yr.iter().zip(gr).map(|(&y, &g)| y * g).sum();
                    dx.extend(yr.iter().zip(gr).map(|(&y, &g)| y * (g - dot)));
                }
                add_into(&mut grads[*x], dx);
            }
        }
        Op::GroupWeightedSum { h, w, group } => {
            let (hv, wv) = (val(*h), val(*w).data());
            let d = hv.cols();
            if need(*h) {
                let mut dh = vec![T::zero(); hv.numel()];
                for (r, &wr) in wv.iter().enumerate() {
                    let gi = r / group;
                    for e in 0..d {
                        dh[r * d + e] = wr * g[gi * d + e];
                    }
                }
                add_into(&mut grads[*h], dh);
            }
            if need(*w) {
                let dw = (0..wv.len())
                    .map(|r| {
                        let gi = r / group;
                        hv.row(r)
                            .iter()
                            .zip(&g[gi * d..(gi + 1) * d])
                            .map(|(&h, &g)| h * g)
                            .sum()
                    })
                    .collect();
                add_into(&mut grads[*w], dw);
            }
        }
        Op::BlockMatMul { x, blocks } => {
            if need(*x) {
                let d = out.cols();
                let mut dx = Vec::with_capacity(g.len());
                let mut offset = 0;
                for b in blocks.iter() {
                    let t = b.rows();
                    let gb = &g[offset * d..(offset + t) * d];
                    dx.extend(matmul_raw(b.data(), t, t, true, gb, t, d, false).0);
                    offset += t;
                }
                add_into(&mut grads[*x], dx);
            }
        }
        Op::Sum(x) => {
            if need(*x) {
                add_into(&mut grads[*x], vec![g[0]; val(*x).numel()]);
            }
        }
        Op::Mean(x) => {
            if need(*x) {
                let n = val(*x).numel();
                let v = g[0] / T::from_usize(n.max(1)).unwrap();
                add_into(&mut grads[*x], vec![v; n]);
            }
        }
        Op::PickRows(x, idx) => {
            if need(*x) {
                let xv = val(*x);
                let cols = xv.cols();
                let mut dx = vec![T::zero(); xv.numel()];
                for (r, &c) in idx.iter().enumerate() {
                    dx[r * cols + c] = g[r];
                }
                add_into(&mut grads[*x], dx);
            }
        }
        Op::RowNormalize { x, eps, norms } => {
            if need(*x) {
                let xv = val(*x);
                let cols = xv.cols();
                let mut dx = Vec::with_capacity(xv.numel());
                for (r, (xr, gr)) in xv.data().chunks(cols).zip(g.chunks(cols)).enumerate() {
                    let n = norms[r];
                    let s = n + *eps;
                    if n > T::zero() {
                        let dot: T = xr.iter().zip(gr).map(|(&x, &g)| x * g).sum();
                        let k = dot / (s * s * n);
                        dx.extend(xr.iter().zip(gr).map(|(&x, &g)| g / s - x * k));
                    } else {
                        dx.extend(gr.iter().map(|&g| g / s));
                    }
                }
                add_into(&mut grads[*x], dx);
            }
        }
        Op::RowSumSq(x) => {
            if need(*x) {
                let xv = val(*x);
                let cols = xv.cols();
                let two = T::from_f64_lossy(2.0);
                let dx = xv
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| two * x * g[i / cols])
                    .collect();
                add_into(&mut grads[*x], dx);
            }
        }
    }
}

impl<'t, T: Real> Var<'t, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn rows(&self) -> usize {
        self.value().rows()
    }

    pub fn cols(&self) -> usize {
        self.value().cols()
    }

    fn needs(&self) -> bool {
        self.tape.needs(self.id)
    }

    fn emit(&self, value: Tensor<T>, op: Op<T>, needs: bool) -> Var<'t, T> {
        self.tape.push(value, op, needs)
    }

    fn zip_with(&self, other: Var<'t, T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (a, b) = (self.value(), other.value());
        assert_eq!(
            a.numel(),
            b.numel(),
            "elementwise shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        );
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(a.shape().to_vec(), data).unwrap()
    }

    pub fn add(self, other: Var<'t, T>) -> Var<'t, T> {
        let out = self.zip_with(other, |a, b| a + b);
        self.emit(out, Op::Add(self.id, other.id), self.needs() || other.needs())
    }

    pub fn sub(self, other: Var<'t, T>) -> Var<'t, T> {
        let out = self.zip_with(other, |a, b| a - b);
        self.emit(out, Op::Sub(self.id, other.id), self.needs() || other.needs())
    }

    pub fn mul(self, other: Var<'t, T>) -> Var<'t, T> {
        let out = self.zip_with(other, |a, b| a * b);
        self.emit(out, Op::Mul(self.id, other.id), self.needs() || other.needs())
    }

    /// Adds a bias vector to every row.
    pub fn add_bias(self, bias: Var<'t, T>) -> Var<'t, T> {
        let (x, b) = (self.value(), bias.value());
        let cols = x.cols();
        assert_eq!(b.numel(), cols, "bias width mismatch");
        let mut data = x.data().to_vec();
        for row in data.chunks_mut(cols) {
            row.iter_mut().zip(b.data()).for_each(|(v, &b)| *v = *v + b);
        }
        let out = Tensor::new(x.shape().to_vec(), data).unwrap();
        self.emit(out, Op::AddBias(self.id, bias.id), self.needs() || bias.needs())
    }

    /// Elementwise product with a constant buffer of the same size.
    pub fn mul_const(self, c: Rc<Vec<T>>) -> Var<'t, T> {
        let x = self.value();
        assert_eq!(x.numel(), c.len(), "mul_const size mismatch");
        let data = x.data().iter().zip(c.iter()).map(|(&a, &b)| a * b).collect();
        let out = Tensor::new(x.shape().to_vec(), data).unwrap();
        self.emit(out, Op::MulConst(self.id, c), self.needs())
    }

    pub fn scale(self, s: T) -> Var<'t, T> {
        let out = self.value().map(|v| v * s);
        self.emit(out, Op::Scale(self.id, s), self.needs())
    }

    fn matmul_general(self, other: Var<'t, T>, ta: bool, tb: bool) -> Var<'t, T> {
        let (a, b) = (self.value(), other.value());
        let (ar, ac) = a.dims2();
        let (br, bc) = b.dims2();
        let (data, m, n) = matmul_raw(a.data(), ar, ac, ta, b.data(), br, bc, tb);
        let out = Tensor::new(vec![m, n], data).unwrap();
        self.emit(
            out,
            Op::MatMul {
                a: self.id,
                b: other.id,
                ta,
                tb,
            },
            self.needs() || other.needs(),
        )
    }

    pub fn matmul(self, other: Var<'t, T>) -> Var<'t, T> {
        self.matmul_general(other, false, false)
    }

    /// `self · otherᵀ`
    pub fn matmul_t(self, other: Var<'t, T>) -> Var<'t, T> {
        self.matmul_general(other, false, true)
    }

    /// `x·W + b` with `W` stored `in×out`.
    pub fn linear(self, w: Var<'t, T>, b: Var<'t, T>) -> Var<'t, T> {
        self.matmul(w).add_bias(b)
    }

    fn map(self, f: Unary<T>) -> Var<'t, T> {
        let x = self.value();
        let cols = x.cols().max(1);
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| f.forward(v, i % cols))
            .collect();
        let out = Tensor::new(x.shape().to_vec(), data).unwrap();
        self.emit(out, Op::Map(self.id, f), self.needs())
    }

    /// Exact GELU, `x·Φ(x)` with the erf-based normal CDF.
    pub fn gelu(self) -> Var<'t, T> {
        self.map(Unary::Gelu)
    }

    pub fn tanh(self) -> Var<'t, T> {
        self.map(Unary::Tanh)
    }

    pub fn sin(self) -> Var<'t, T> {
        self.map(Unary::Sin)
    }

    pub fn cos(self) -> Var<'t, T> {
        self.map(Unary::Cos)
    }

    pub fn exp(self) -> Var<'t, T> {
        self.map(Unary::Exp)
    }

    /// `sin` on even columns and `cos` on odd columns.
    pub fn alt_sin_cos(self) -> Var<'t, T> {
        self.map(Unary::AltSinCos)
    }

    /// `βx·exp(−βx)` on positive entries, zero on the rest.
    pub fn gamma_response(self, beta: T) -> Var<'t, T> {
        self.map(Unary::Gamma(beta))
    }

    /// `ln(1 + (x + s_r) / col_div[a])`, where each row is shifted by
    /// `s_r = −min(row) + eps` when it has a negative entry and left alone
    /// otherwise. The shift is differentiated through its arg-min.
    pub fn log_shift(self, col_div: Rc<Vec<T>>, eps: T) -> Var<'t, T> {
        let x = self.value();
        let cols = x.cols();
        assert_eq!(col_div.len(), cols, "log_shift divisor width mismatch");
        let mut shifts = Vec::with_capacity(x.rows());
        let mut argmin = Vec::with_capacity(x.rows());
        let mut data = Vec::with_capacity(x.numel());
        for row in x.data().chunks(cols) {
            let (amin, mn) = row
                .iter()
                .copied()
                .enumerate()
                .fold((0, T::infinity()), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
            let (s, am) = if mn < T::zero() {
                (eps - mn, Some(amin))
            } else {
                (T::zero(), None)
            };
            shifts.push(s);
            argmin.push(am);
            data.extend(
                row.iter()
                    .zip(col_div.iter())
                    .map(|(&v, &dv)| (T::one() + (v + s) / dv).ln()),
            );
        }
        let out = Tensor::new(x.shape().to_vec(), data).unwrap();
        self.emit(
            out,
            Op::LogShift {
                x: self.id,
                col_div,
                shifts,
                argmin,
            },
            self.needs(),
        )
    }

    /// Row-wise layer normalization with affine gain and bias.
    pub fn layer_norm(self, gain: Var<'t, T>, bias: Var<'t, T>, eps: T) -> Var<'t, T> {
        let x = self.value();
        let cols = x.cols();
        let (gv, bv) = (gain.value(), bias.value());
        assert_eq!(gv.numel(), cols, "layer_norm gain width");
        assert_eq!(bv.numel(), cols, "layer_norm bias width");
        let nf = T::from_usize(cols).unwrap();
        let mut xhat = Vec::with_capacity(x.numel());
        let mut inv_std = Vec::with_capacity(x.rows());
        let mut data = Vec::with_capacity(x.numel());
        for row in x.data().chunks(cols) {
            let mean = row.iter().copied().sum::<T>() / nf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
            let denom = (var + eps).sqrt();
            let inv = if denom > T::zero() { T::one() / denom } else { T::zero() };
            inv_std.push(inv);
            for (a, &v) in row.iter().enumerate() {
                let h = (v - mean) * inv;
                xhat.push(h);
                data.push(gv.data()[a] * h + bv.data()[a]);
            }
        }
        let out = Tensor::new(x.shape().to_vec(), data).unwrap();
        let needs = self.needs() || gain.needs() || bias.needs();
        self.emit(
            out,
            Op::LayerNorm {
                x: self.id,
                gain: gain.id,
                bias: bias.id,
                xhat,
                inv_std,
            },
            needs,
        )
    }

    /// Softmax over the last axis, shifted by the row max.
    pub fn softmax_rows(self) -> Var<'t, T> {
        let x = self.value();
        let cols = x.cols();
        let mut data = Vec::with_capacity(x.numel());
        for row in x.data().chunks(cols) {
            softmax_into(row, &mut data);
        }
        let out = Tensor::new(x.shape().to_vec(), data).unwrap();
        self.emit(out, Op::Softmax(self.id), self.needs())
    }

    pub fn log_softmax_rows(self) -> Var<'t, T> {
        let x = self.value();
        let cols = x.cols();
        let mut data = Vec::with_capacity(x.numel());
        for row in x.data().chunks(cols) {
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = mx + row.iter().map(|&v| (v - mx).exp()).sum::<T>().ln();
            data.extend(row.iter().map(|&v| v - lse));
        }
        let out = Tensor::new(x.shape().to_vec(), data).unwrap();
        self.emit(out, Op::LogSoftmax(self.id), self.needs())
    }

    /// Gathers rows; `None` yields a zero row.
    pub fn gather_rows(self, idx: Rc<Vec<Option<usize>>>) -> Var<'t, T> {
        let x = self.value();
        let cols = x.cols();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for i in idx.iter() {
            match i {
                Some(i) => data.extend_from_slice(x.row(*i)),
                None => data.extend(std::iter::repeat_n(T::zero(), cols)),
            }
        }
        let out = Tensor::new(vec![idx.len(), cols], data).unwrap();
        self.emit(out, Op::Gather { src: self.id, idx }, self.needs())
    }

    pub fn select_rows(self, idx: &[usize]) -> Var<'t, T> {
        self.gather_rows(Rc::new(idx.iter().map(|&i| Some(i)).collect()))
    }

    /// Scaled dot-product attention over independent groups of `group`
    /// consecutive rows, split into `heads` column blocks. Keys whose
    /// `key_mask` entry is false receive zero weight; a query whose group
    /// has no valid key gets a zero output.
    pub fn attention(
        self,
        k: Var<'t, T>,
        v: Var<'t, T>,
        heads: usize,
        group: usize,
        key_mask: &[bool],
    ) -> Var<'t, T> {
        let (qv, kv, vv) = (self.value(), k.value(), v.value());
        let (rows, d) = qv.dims2();
        assert_eq!(kv.dims2(), (rows, d), "attention key shape");
        assert_eq!(vv.dims2(), (rows, d), "attention value shape");
        assert!(heads > 0 && d % heads == 0, "width {d} not divisible by {heads} heads");
        assert!(group > 0 && rows % group == 0, "rows {rows} not a multiple of group {group}");
        assert_eq!(key_mask.len(), rows, "key mask length");
        let dh = d / heads;
        let t = group;
        let groups = rows / t;
        let scale = T::one() / T::from_usize(dh).unwrap().sqrt();
        let (q, kd, vd) = (qv.data(), kv.data(), vv.data());
        let mut probs = vec![T::zero(); groups * heads * t * t];
        let mut out = vec![T::zero(); rows * d];
        let mut scores = vec![T::zero(); t];
        for gi in 0..groups {
            let mask = &key_mask[gi * t..(gi + 1) * t];
            for h in 0..heads {
                let off = h * dh;
                let pbase = (gi * heads + h) * t * t;
                for r in 0..t {
                    let qrow = (gi * t + r) * d + off;
                    let mut mx = T::neg_infinity();
                    for c in 0..t {
                        if mask[c] {
                            let krow = (gi * t + c) * d + off;
                            let mut s = T::zero();
                            for e in 0..dh {
                                s = s + q[qrow + e] * kd[krow + e];
                            }
                            scores[c] = s * scale;
                            mx = mx.max(scores[c]);
                        }
                    }
                    if mx == T::neg_infinity() {
                        continue;
                    }
                    let mut z = T::zero();
                    let prow = &mut probs[pbase + r * t..pbase + (r + 1) * t];
                    for c in 0..t {
                        if mask[c] {
                            prow[c] = (scores[c] - mx).exp();
                            z = z + prow[c];
                        }
                    }
                    for c in 0..t {
                        prow[c] = prow[c] / z;
                        let p = prow[c];
                        if p == T::zero() {
                            continue;
                        }
                        let vrow = (gi * t + c) * d + off;
                        for e in 0..dh {
                            out[qrow + e] = out[qrow + e] + p * vd[vrow + e];
                        }
                    }
                }
            }
        }
        let out = Tensor::new(vec![rows, d], out).unwrap();
        let needs = self.needs() || k.needs() || v.needs();
        self.emit(
            out,
            Op::Attention {
                q: self.id,
                k: k.id,
                v: v.id,
                group,
                heads,
                scale,
                probs,
            },
            needs,
        )
    }

    /// Softmax within consecutive groups of a column of scores, with masked
    /// entries forced to zero weight.
    pub fn group_softmax(self, group: usize, mask: &[bool]) -> Var<'t, T> {
        let x = self.value();
        assert_eq!(x.numel(), mask.len(), "group_softmax mask length");
        assert!(group > 0 && x.numel() % group == 0);
        let mut data = Vec::with_capacity(x.numel());
        for (row, m) in x.data().chunks(group).zip(mask.chunks(group)) {
            let mx = row
                .iter()
                .zip(m)
                .filter(|(_, &m)| m)
                .map(|(&v, _)| v)
                .fold(T::neg_infinity(), T::max);
            if mx == T::neg_infinity() {
                data.extend(std::iter::repeat_n(T::zero(), group));
                continue;
            }
            let e: Vec<T> = row
                .iter()
                .zip(m)
                .map(|(&v, &m)| if m { (v - mx).exp() } else { T::zero() })
                .collect();
            let z: T = e.iter().copied().sum();
            data.extend(e.into_iter().map(|v| v / z));
        }
        let out = Tensor::new(vec![x.numel(), 1], data).unwrap();
        self.emit(out, Op::GroupSoftmax(self.id, group), self.needs())
    }

    /// Weighted sum of each group of `group` rows of `self` with weights `w`.
    pub fn group_weighted_sum(self, w: Var<'t, T>, group: usize) -> Var<'t, T> {
        let (h, wv) = (self.value(), w.value());
        let (rows, d) = h.dims2();
        assert_eq!(wv.numel(), rows, "one weight per row");
        let groups = rows / group;
        let mut data = vec![T::zero(); groups * d];
        for (r, &wr) in wv.data().iter().enumerate() {
            let gi = r / group;
            for (o, &v) in data[gi * d..(gi + 1) * d].iter_mut().zip(h.row(r)) {
                *o = *o + wr * v;
            }
        }
        let out = Tensor::new(vec![groups, d], data).unwrap();
        self.emit(
            out,
            Op::GroupWeightedSum {
                h: self.id,
                w: w.id,
                group,
            },
            self.needs() || w.needs(),
        )
    }

    /// Left-multiplies consecutive row blocks by constant square matrices.
    pub fn block_matmul(self, blocks: Rc<Vec<Tensor<T>>>) -> Var<'t, T> {
        let x = self.value();
        let (rows, d) = x.dims2();
        let mut data = Vec::with_capacity(x.numel());
        let mut offset = 0;
        for b in blocks.iter() {
            let t = b.rows();
            assert_eq!(b.cols(), t, "blocks must be square");
            let xb = &x.data()[offset * d..(offset + t) * d];
            data.extend(matmul_raw(b.data(), t, t, false, xb, t, d, false).0);
            offset += t;
        }
        assert_eq!(offset, rows, "blocks must cover every row");
        let out = Tensor::new(vec![rows, d], data).unwrap();
        self.emit(out, Op::BlockMatMul { x: self.id, blocks }, self.needs())
    }

    pub fn sum(self) -> Var<'t, T> {
        let s: T = self.value().data().iter().copied().sum();
        self.emit(Tensor::scalar(s), Op::Sum(self.id), self.needs())
    }

    pub fn mean(self) -> Var<'t, T> {
        let x = self.value();
        let s: T = x.data().iter().copied().sum::<T>() / T::from_usize(x.numel().max(1)).unwrap();
        self.emit(Tensor::scalar(s), Op::Mean(self.id), self.needs())
    }

    /// Picks entry `idx[r]` from each row `r`.
    pub fn pick_rows(self, idx: Rc<Vec<usize>>) -> Var<'t, T> {
        let x = self.value();
        assert_eq!(idx.len(), x.rows(), "one index per row");
        let data = idx.iter().enumerate().map(|(r, &c)| x.at(r, c)).collect();
        self.emit(Tensor::vector(data), Op::PickRows(self.id, idx), self.needs())
    }

    /// Each row divided by `‖row‖₂ + eps`.
    pub fn row_normalize(self, eps: T) -> Var<'t, T> {
        let x = self.value();
        let cols = x.cols();
        let mut norms = Vec::with_capacity(x.rows());
        let mut data = Vec::with_capacity(x.numel());
        for row in x.data().chunks(cols) {
            let n = row.iter().map(|&v| v * v).sum::<T>().sqrt();
            norms.push(n);
            data.extend(row.iter().map(|&v| v / (n + eps)));
        }
        let out = Tensor::new(x.shape().to_vec(), data).unwrap();
        self.emit(
            out,
            Op::RowNormalize {
                x: self.id,
                eps,
                norms,
            },
            self.needs(),
        )
    }

    pub fn row_sum_sq(self) -> Var<'t, T> {
        let x = self.value();
        let cols = x.cols();
        let data = x
            .data()
            .chunks(cols)
            .map(|r| r.iter().map(|&v| v * v).sum())
            .collect();
        self.emit(Tensor::vector(data), Op::RowSumSq(self.id), self.needs())
    }

    /// Inverted dropout: zeroes entries with probability `rate` and scales the
    /// survivors by `1/(1−rate)`. Rate zero is the identity.
    pub fn dropout<R: Rng + ?Sized>(self, rate: f64, rng: &mut R) -> Var<'t, T> {
        if rate <= 0.0 {
            return self;
        }
        let keep = 1.0 - rate;
        let scale = T::from_f64_lossy(1.0 / keep);
        let n = self.value().numel();
        let mask: Vec<T> = (0..n)
            .map(|_| {
                if rng.random::<f64>() < keep {
                    scale
                } else {
                    T::zero()
                }
            })
            .collect();
        self.mul_const(Rc::new(mask))
    }
}

/// Appends `softmax(row)` to `out`.
pub(crate) fn softmax_into<T: Real>(row: &[T], out: &mut Vec<T>) {
    let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
    let start = out.len();
    out.extend(row.iter().map(|&v| (v - mx).exp()));
    let z: T = out[start..].iter().copied().sum();
    out[start..].iter_mut().for_each(|v| *v = *v / z);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
    }

    /// Compares analytic gradients of `Σ w ⊙ f(inputs)` against central
    /// differences, `w` being fixed random weights.
    fn check<F>(inputs: &[Tensor<f64>], f: F)
    where
        F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Var<'t, f64>,
    {
        let eval = |xs: &[Tensor<f64>], track: bool| -> (f64, Vec<Option<Tensor<f64>>>) {
            let tape = Tape::new();
            let vars: Vec<_> = xs
                .iter()
                .map(|x| if track { tape.param(x.clone()) } else { tape.constant(x.clone()) })
                .collect();
            let out = f(&tape, &vars);
            let w = random(&out.shape(), 99);
            let loss = out.mul(tape.constant(w)).sum();
            let value = loss.value().item();
            if !track {
                return (value, Vec::new());
            }
            let g = tape.backward(loss).unwrap();
            (value, vars.iter().map(|v| g.get(*v)).collect())
        };
        let (_, grads) = eval(inputs, true);
        let h = 1e-6;
        for (k, x) in inputs.iter().enumerate() {
            for i in 0..x.numel() {
                let mut plus = inputs.to_vec();
                plus[k].data_mut()[i] += h;
                let mut minus = inputs.to_vec();
                minus[k].data_mut()[i] -= h;
                let numeric = (eval(&plus, false).0 - eval(&minus, false).0) / (2.0 * h);
                let analytic = grads[k].as_ref().map_or(0.0, |g| g.data()[i]);
                let err = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-4);
                assert!(err < 1e-5, "input {k} entry {i}: analytic {analytic} numeric {numeric}");
            }
        }
    }

    #[test]
    fn gradient_of_sum_is_ones() {
        let tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0f64, 2.0, 3.0]));
        let g = tape.backward(x.sum()).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn gradient_of_square_sum() {
        let tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![2.0f64, -3.0]));
        let g = tape.backward(x.mul(x).sum()).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[4.0, -6.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0f64, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0f64, 2.0]));
        let c = tape.constant(Tensor::vector(vec![3.0f64, 4.0]));
        let g = tape.backward(x.mul(c).sum()).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(x).unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn elementwise_binary_ops() {
        let xs = [random(&[3, 4], 1), random(&[3, 4], 2)];
        check(&xs, |_, v| v[0].add(v[1]));
        check(&xs, |_, v| v[0].sub(v[1]));
        check(&xs, |_, v| v[0].mul(v[1]));
        check(&xs, |_, v| v[0].mul(v[0]).add(v[1].scale(0.3)));
    }

    #[test]
    fn bias_and_constant_products() {
        check(&[random(&[3, 4], 1), random(&[4], 2)], |_, v| v[0].add_bias(v[1]));
        let c = Rc::new(random(&[3, 4], 3).into_data());
        check(&[random(&[3, 4], 4)], move |_, v| v[0].mul_const(Rc::clone(&c)));
    }

    #[test]
    fn matrix_products() {
        check(&[random(&[3, 4], 1), random(&[4, 5], 2)], |_, v| v[0].matmul(v[1]));
        check(&[random(&[3, 4], 1), random(&[5, 4], 2)], |_, v| v[0].matmul_t(v[1]));
        check(&[random(&[3, 4], 1), random(&[4, 2], 2), random(&[2], 3)], |_, v| {
            v[0].linear(v[1], v[2])
        });
        // Same operand on both sides.
        check(&[random(&[4, 4], 5)], |_, v| v[0].matmul_t(v[0]));
    }

    #[test]
    fn elementwise_maps() {
        let x = [random(&[3, 6], 7)];
        check(&x, |_, v| v[0].gelu());
        check(&x, |_, v| v[0].tanh());
        check(&x, |_, v| v[0].sin());
        check(&x, |_, v| v[0].cos());
        check(&x, |_, v| v[0].exp());
        check(&x, |_, v| v[0].alt_sin_cos());
        check(&x, |_, v| v[0].gamma_response(1.7));
    }

    #[test]
    fn log_shift_with_and_without_negative_rows() {
        let div = Rc::new(vec![1.0, 2.0, 5.0]);
        let d2 = Rc::clone(&div);
        check(&[random(&[4, 3], 8)], move |_, v| v[0].log_shift(Rc::clone(&div), 1e-3));
        let pos = random(&[4, 3], 9).map(|x| x.abs() + 0.1);
        check(&[pos], move |_, v| v[0].log_shift(Rc::clone(&d2), 1e-3));
    }

    #[test]
    fn normalizations() {
        check(&[random(&[3, 5], 1), random(&[5], 2), random(&[5], 3)], |_, v| {
            v[0].layer_norm(v[1], v[2], 1e-12)
        });
        check(&[random(&[3, 5], 4)], |_, v| v[0].softmax_rows());
        check(&[random(&[3, 5], 5)], |_, v| v[0].log_softmax_rows());
        check(&[random(&[3, 5], 6)], |_, v| v[0].row_normalize(1e-8));
        check(&[random(&[3, 5], 7)], |_, v| v[0].row_sum_sq());
    }

    #[test]
    fn gathers_and_concatenation() {
        let idx = Rc::new(vec![Some(2), None, Some(0), Some(2)]);
        check(&[random(&[3, 4], 1)], move |_, v| v[0].gather_rows(Rc::clone(&idx)));
        check(&[random(&[2, 3], 2), random(&[1, 3], 3)], |t, v| t.concat_rows(&[v[0], v[1], v[0]]));
        let pick = Rc::new(vec![1, 0, 3]);
        check(&[random(&[3, 4], 4)], move |_, v| v[0].pick_rows(Rc::clone(&pick)));
        check(&[random(&[3, 4], 5)], |_, v| v[0].sum().add(v[0].mean()));
    }

    #[test]
    fn masked_grouped_attention() {
        let mask = vec![false, true, true, true, true, false, true, true];
        check(
            &[random(&[8, 4], 1), random(&[8, 4], 2), random(&[8, 4], 3)],
            move |_, v| v[0].attention(v[1], v[2], 2, 4, &mask),
        );
    }

    #[test]
    fn attention_skips_masked_keys() {
        let tape = Tape::new();
        let q = tape.constant(random(&[3, 4], 1));
        let k = tape.constant(random(&[3, 4], 2));
        let v = random(&[3, 4], 3);
        let a = q.attention(k, tape.constant(v.clone()), 2, 3, &[false, true, true]);
        let mut v2 = v.clone();
        v2.row_mut(0).iter_mut().for_each(|x| *x += 100.0);
        let b = q.attention(k, tape.constant(v2), 2, 3, &[false, true, true]);
        assert!(a.value().max_abs_diff(&b.value()) < 1e-12);
    }

    #[test]
    fn group_pooling() {
        let mask = vec![true, false, true, true, true, true];
        check(&[random(&[6, 1], 1)], move |_, v| v[0].group_softmax(3, &mask));
        check(&[random(&[6, 3], 2), random(&[6, 1], 3)], |_, v| v[0].group_weighted_sum(v[1], 3));
    }

    #[test]
    fn block_products() {
        let blocks = Rc::new(vec![random(&[2, 2], 1), random(&[3, 3], 2)]);
        check(&[random(&[5, 4], 3)], move |_, v| v[0].block_matmul(Rc::clone(&blocks)));
    }

    #[test]
    fn dropout_rate_zero_is_identity() {
        let tape = Tape::new();
        let x = tape.param(random(&[3, 3], 1));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(x.dropout(0.0, &mut rng).id(), x.id());
        let d = x.dropout(0.5, &mut rng).value();
        for (a, b) in d.data().iter().zip(x.value().data()) {
            assert!(*a == 0.0 || (a - 2.0 * b).abs() < 1e-12);
        }
    }
}
