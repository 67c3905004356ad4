//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records every operation as a node in creation order, which is
//! already a topological order. [`Graph::backward`] walks the tape once in
//! reverse, so every node is visited exactly once.
//!
//! Parameters enter the tape by reference ([`Graph::param`]) and are never
//! copied; intermediate values are owned by the tape.

use alloc::borrow::Cow;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::span::{self, SampleRow};
use crate::{Error, Result, Scalar, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Train or inference behaviour for stochastic layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Affine { x: Var, w: Var, b: Var },
    MatMul { a: Var, b: Var },
    Conv2d { x: Var, filters: Var, stride: (usize, usize) },
    ChannelBias { x: Var, bias: Var },
    Relu(Var),
    Dropout { x: Var, mask: Vec<T> },
    Reshape(Var),
    Concat(Var, Var),
    TileRows(Var),
    Softmax(Var),
    CrossEntropy { probs: Var, target: usize },
    AlphaHead(Var),
    Sample { frames: Var, alpha: Var, cache: SampleCache<T> },
    SquareLoss { pred: Var, target: Vec<T> },
    Sum(Var),
    Add(Var, Var),
    Scale(Var, T),
}

#[derive(Debug)]
struct SampleCache<T> {
    rows: Vec<SampleRow<T>>,
    /// d(clamped α) / d(raw α), row-major 2×2: [[dα1'/dα1, dα1'/dα2], [dα2'/dα1, dα2'/dα2]].
    jac: [T; 4],
}

struct Node<'p, T: Scalar> {
    value: Cow<'p, Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Computation tape. `'p` is the lifetime of borrowed parameter tensors.
pub struct Graph<'p, T: Scalar> {
    nodes: Vec<Node<'p, T>>,
}

impl<'p, T: Scalar> Default for Graph<'p, T> {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf borrowed from a parameter store.
    pub fn param(&mut self, t: &'p Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(t),
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Owned trainable leaf.
    pub fn param_owned(&mut self, t: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(t),
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Non-trainable leaf borrowed from the caller.
    pub fn input(&mut self, t: &'p Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(t),
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Non-trainable owned leaf.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(t),
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Copies `v` into a fresh constant leaf, cutting the gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// `y = x W + b` for `x` of shape `[n, p]` or `[p]`, `W` `[p, q]`, `b` `[q]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.value(x).shape(), self.value(w).shape(), self.value(b).shape());
        if ws.len() != 2 || bs != [ws[1]] {
            return Err(mismatch("dense_affine", ws, bs));
        }
        let (p, q) = (ws[0], ws[1]);
        let (n, out_shape) = match xs {
            [k] if *k == p => (1, vec![q]),
            [n, k] if *k == p => (*n, vec![*n, q]),
            _ => return Err(mismatch("dense_affine", xs, ws)),
        };
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = self.value(b).data();
        let mut out = vec![T::zero(); n * q];
        for r in 0..n {
            let orow = &mut out[r * q..(r + 1) * q];
            orow.copy_from_slice(bv);
            for (i, &xi) in xv[r * p..(r + 1) * p].iter().enumerate() {
                if xi == T::zero() {
                    continue;
                }
                let wrow = &wv[i * q..(i + 1) * q];
                for (o, &wij) in orow.iter_mut().zip(wrow) {
                    *o = *o + xi * wij;
                }
            }
        }
        let t = Tensor::new(&out_shape, out)?;
        Ok(self.push(t, Op::Affine { x, w, b }, &[x, w, b]))
    }

    /// Matrix product `[n, p] x [p, q]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (as_, bs) = (self.value(a).shape(), self.value(b).shape());
        if as_.len() != 2 || bs.len() != 2 || as_[1] != bs[0] {
            return Err(mismatch("matmul", as_, bs));
        }
        let (n, p, q) = (as_[0], as_[1], bs[1]);
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = vec![T::zero(); n * q];
        for r in 0..n {
            for i in 0..p {
                let aik = av[r * p + i];
                for j in 0..q {
                    out[r * q + j] = out[r * q + j] + aik * bv[i * q + j];
                }
            }
        }
        let t = Tensor::new(&[n, q], out)?;
        Ok(self.push(t, Op::MatMul { a, b }, &[a, b]))
    }

    /// Valid (unpadded) cross-correlation of a single-channel `[H, W]` input with
    /// `[F, kh, kw]` filters; output `[F, H', W']`.
    pub fn conv2d(&mut self, x: Var, filters: Var, stride: (usize, usize)) -> Result<Var> {
        let (xs, fs) = (self.value(x).shape().to_vec(), self.value(filters).shape().to_vec());
        if xs.len() != 2 || fs.len() != 3 {
            return Err(mismatch("conv2d_valid", &xs, &fs));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::InvalidArgument("conv stride must be positive".into()));
        }
        let (h, w) = (xs[0], xs[1]);
        let (nf, kh, kw) = (fs[0], fs[1], fs[2]);
        if kh > h || kw > w {
            return Err(Error::KernelTooLarge {
                kernel: vec![kh, kw],
                input: vec![h, w],
            });
        }
        let oh = (h - kh) / stride.0 + 1;
        let ow = (w - kw) / stride.1 + 1;
        let xv = self.value(x).data();
        let fv = self.value(filters).data();
        let mut out = vec![T::zero(); nf * oh * ow];
        for f in 0..nf {
            for ki in 0..kh {
                for kj in 0..kw {
                    let wt = fv[(f * kh + ki) * kw + kj];
                    for r in 0..oh {
                        let xrow = &xv[(r * stride.0 + ki) * w + kj..];
                        let orow = &mut out[(f * oh + r) * ow..(f * oh + r + 1) * ow];
                        if stride.1 == 1 {
                            for (o, &xc) in orow.iter_mut().zip(xrow) {
                                *o = *o + wt * xc;
                            }
                        } else {
                            for (o, &xc) in orow.iter_mut().zip(xrow.iter().step_by(stride.1)) {
                                *o = *o + wt * xc;
                            }
                        }
                    }
                }
            }
        }
        let t = Tensor::new(&[nf, oh, ow], out)?;
        Ok(self.push(t, Op::Conv2d { x, filters, stride }, &[x, filters]))
    }

    /// Adds `bias[f]` to every element of channel `f` of `x` (`[F, ...]`).
    pub fn channel_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let xs = self.value(x).shape();
        let bs = self.value(bias).shape();
        if bs != [xs[0]] {
            return Err(mismatch("channel_bias", xs, bs));
        }
        let per = self.value(x).cols();
        let mut t = self.value(x).clone();
        let bv = self.value(bias).data().to_vec();
        for (f, chunk) in t.data_mut().chunks_mut(per).enumerate() {
            chunk.iter_mut().for_each(|v| *v = *v + bv[f]);
        }
        Ok(self.push(t, Op::ChannelBias { x, bias }, &[x, bias]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(t, Op::Relu(x), &[x])
    }

    /// Inverted dropout: survivors are scaled by `1/keep` so inference is the identity.
    pub fn dropout(&mut self, x: Var, keep: f64, mode: Mode, rng: &mut crate::Rng) -> Result<Var> {
        if !(keep > 0.0 && keep <= 1.0) {
            return Err(Error::InvalidArgument(alloc::format!(
                "dropout keep ratio {keep} outside (0, 1]"
            )));
        }
        if mode == Mode::Infer || keep == 1.0 {
            return Ok(x);
        }
        let scale = T::from_f64(1.0 / keep);
        let mask: Vec<T> = (0..self.value(x).len())
            .map(|_| {
                if rng.random::<f64>() < keep {
                    scale
                } else {
                    T::zero()
                }
            })
            .collect();
        let mut t = self.value(x).clone();
        for (v, &m) in t.data_mut().iter_mut().zip(&mask) {
            *v = *v * m;
        }
        Ok(self.push(t, Op::Dropout { x, mask }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        Ok(self.push(t, Op::Reshape(x), &[x]))
    }

    /// Concatenates two 1-D tensors.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape().len() != 1 || bv.shape().len() != 1 {
            return Err(mismatch("concat", av.shape(), bv.shape()));
        }
        let mut data = av.data().to_vec();
        data.extend_from_slice(bv.data());
        let n = data.len();
        let t = Tensor::new(&[n], data)?;
        Ok(self.push(t, Op::Concat(a, b), &[a, b]))
    }

    /// Repeats a 1-D tensor `[D]` as `rows` identical rows `[rows, D]`.
    pub fn tile_rows(&mut self, x: Var, rows: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape().len() != 1 || rows == 0 {
            return Err(mismatch("tile_rows", xv.shape(), &[rows]));
        }
        let d = xv.len();
        let mut data = Vec::with_capacity(rows * d);
        for _ in 0..rows {
            data.extend_from_slice(xv.data());
        }
        let t = Tensor::new(&[rows, d], data)?;
        Ok(self.push(t, Op::TileRows(x), &[x]))
    }

    pub fn softmax(&mut self, z: Var) -> Var {
        let t = softmax(self.value(z));
        self.push(t, Op::Softmax(z), &[z])
    }

    /// `-ln(max(p[target], 1e-12))`.
    pub fn cross_entropy(&mut self, probs: Var, target: usize) -> Result<Var> {
        let p = self.value(probs);
        if target >= p.len() {
            return Err(Error::NotOneHot);
        }
        let pt = p.data()[target].max(T::from_f64(CE_EPS));
        let t = Tensor::scalar(-pt.libm_ln());
        Ok(self.push(t, Op::CrossEntropy { probs, target }, &[probs]))
    }

    /// Squashes a `[2]` logit vector into `(sigmoid(z1), tanh(z2))`.
    pub fn alpha_head(&mut self, z: Var) -> Result<Var> {
        let zv = self.value(z);
        if zv.shape() != [2] {
            return Err(mismatch("alpha_head", zv.shape(), &[2]));
        }
        let d = zv.data();
        let a1 = T::one() / (T::one() + (-d[0]).libm_exp());
        let a2 = d[1].libm_tanh();
        let t = Tensor::new(&[2], vec![a1, a2])?;
        Ok(self.push(t, Op::AlphaHead(z), &[z]))
    }

    /// Differentiable segment sampler: clamps `alpha` and interpolates `samples`
    /// rows from `frames` (`[M, D]`). See [`span::sample_segment`].
    pub fn sample_segment(&mut self, frames: Var, alpha: Var, samples: usize) -> Result<Var> {
        let fv = self.value(frames);
        let av = self.value(alpha);
        if fv.shape().len() != 2 || av.shape() != [2] {
            return Err(mismatch("sample_segment", fv.shape(), av.shape()));
        }
        let a = av.data();
        let (out, rows, jac) = span::sample_forward(fv, a[0], a[1], samples)?;
        let cache = SampleCache { rows, jac };
        Ok(self.push(out, Op::Sample { frames, alpha, cache }, &[frames, alpha]))
    }

    /// `sum_k (pred_k - target_k)^2`.
    pub fn square_loss(&mut self, pred: Var, target: &[T]) -> Result<Var> {
        let p = self.value(pred);
        if p.len() != target.len() {
            return Err(mismatch("square_loss", p.shape(), &[target.len()]));
        }
        let s = p
            .data()
            .iter()
            .zip(target)
            .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
        Ok(self.push(
            Tensor::scalar(s),
            Op::SquareLoss {
                pred,
                target: target.to_vec(),
            },
            &[pred],
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(mismatch("add", av.shape(), bv.shape()));
        }
        let mut t = av.clone();
        t.add_assign(bv);
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let t = self.value(x).map(|v| v * c);
        self.push(t, Op::Scale(x, c), &[x])
    }

    /// Reverse sweep from a scalar `root`, seeding its gradient with `seed`.
    pub fn backward_scaled(&self, root: Var, seed: T) -> Gradients<T> {
        self.backward_into(root, seed, &[], &mut [])
    }

    /// Like [`Self::backward_scaled`], but the gradient of every node `v` with
    /// `routes[v] = Some(k)` is added in place to `sinks[k]` instead of being
    /// returned. A sink left at `None` means no gradient reached it.
    pub fn backward_into(&self, root: Var, seed: T, routes: &[Option<usize>], sinks: &mut [Option<Tensor<T>>]) -> Gradients<T> {
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[root.0].requires_grad {
            return Gradients { grads };
        }
        let root_shape = self.nodes[root.0].value.shape().to_vec();
        let mut acc = Sink {
            grads: &mut grads,
            routes,
            sinks,
        };
        acc.add(root, Tensor::full(&root_shape, seed));
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = acc.grads[idx].take() else { continue };
            self.backprop_node(node, &g, &mut acc);
        }
        Gradients { grads }
    }

    pub fn backward(&self, root: Var) -> Gradients<T> {
        self.backward_scaled(root, T::one())
    }

    fn backprop_node(&self, node: &Node<'p, T>, g: &Tensor<T>, grads: &mut Sink<'_, T>) {
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        let val = |v: Var| -> &Tensor<T> { &self.nodes[v.0].value };
        match &node.op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let xv = val(*x);
                let wv = val(*w);
                let (p, q) = (wv.shape()[0], wv.shape()[1]);
                let n = xv.len() / p;
                let gd = g.data();
                if needs(*b) {
                    let mut gb = vec![T::zero(); q];
                    for r in 0..n {
                        for (o, &gv) in gb.iter_mut().zip(&gd[r * q..(r + 1) * q]) {
                            *o = *o + gv;
                        }
                    }
                    grads.add(*b, vec_tensor(&[q], gb));
                }
                if needs(*w) {
                    let gw = grads.slot(*w).get_or_insert_with(|| Tensor::zeros(&[p, q])).data_mut();
                    let xd = xv.data();
                    for r in 0..n {
                        let grow = &gd[r * q..(r + 1) * q];
                        for i in 0..p {
                            let xi = xd[r * p + i];
                            if xi == T::zero() {
                                continue;
                            }
                            for (o, &gv) in gw[i * q..(i + 1) * q].iter_mut().zip(grow) {
                                *o = *o + xi * gv;
                            }
                        }
                    }
                }
                if needs(*x) {
                    let wd = wv.data();
                    let mut gx = vec![T::zero(); n * p];
                    for r in 0..n {
                        let grow = &gd[r * q..(r + 1) * q];
                        for i in 0..p {
                            gx[r * p + i] = dot(&wd[i * q..(i + 1) * q], grow);
                        }
                    }
                    grads.add(*x, vec_tensor(xv.shape(), gx));
                }
            }
            Op::MatMul { a, b } => {
                let (av, bv) = (val(*a), val(*b));
                let (n, p, q) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                let (ad, bd, gd) = (av.data(), bv.data(), g.data());
                if needs(*a) {
                    let mut ga = vec![T::zero(); n * p];
                    for r in 0..n {
                        for i in 0..p {
                            ga[r * p + i] = dot(&gd[r * q..(r + 1) * q], &bd[i * q..(i + 1) * q]);
                        }
                    }
                    grads.add(*a, vec_tensor(&[n, p], ga));
                }
                if needs(*b) {
                    let mut gb = vec![T::zero(); p * q];
                    for r in 0..n {
                        for i in 0..p {
                            let aik = ad[r * p + i];
                            for j in 0..q {
                                gb[i * q + j] = gb[i * q + j] + aik * gd[r * q + j];
                            }
                        }
                    }
                    grads.add(*b, vec_tensor(&[p, q], gb));
                }
            }
            Op::Conv2d { x, filters, stride } => {
                let (xv, fv) = (val(*x), val(*filters));
                let w = xv.shape()[1];
                let (nf, kh, kw) = (fv.shape()[0], fv.shape()[1], fv.shape()[2]);
                let (oh, ow) = (g.shape()[1], g.shape()[2]);
                let (xd, fd, gd) = (xv.data(), fv.data(), g.data());
                if needs(*filters) {
                    let mut gf = vec![T::zero(); nf * kh * kw];
                    for f in 0..nf {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                let mut acc = T::zero();
                                for r in 0..oh {
                                    let xrow = &xd[(r * stride.0 + ki) * w..];
                                    let grow = &gd[(f * oh + r) * ow..(f * oh + r + 1) * ow];
                                    for (c, &gv) in grow.iter().enumerate() {
                                        acc = acc + gv * xrow[c * stride.1 + kj];
                                    }
                                }
                                gf[(f * kh + ki) * kw + kj] = acc;
                            }
                        }
                    }
                    grads.add(*filters, vec_tensor(fv.shape(), gf));
                }
                if needs(*x) {
                    let mut gx = vec![T::zero(); xv.len()];
                    for f in 0..nf {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                let wt = fd[(f * kh + ki) * kw + kj];
                                for r in 0..oh {
                                    let base = (r * stride.0 + ki) * w;
                                    let grow = &gd[(f * oh + r) * ow..(f * oh + r + 1) * ow];
                                    for (c, &gv) in grow.iter().enumerate() {
                                        let ix = base + c * stride.1 + kj;
                                        gx[ix] = gx[ix] + wt * gv;
                                    }
                                }
                            }
                        }
                    }
                    grads.add(*x, vec_tensor(xv.shape(), gx));
                }
            }
            Op::ChannelBias { x, bias } => {
                if needs(*bias) {
                    let per = g.cols();
                    let gb: Vec<T> = g
                        .data()
                        .chunks(per)
                        .map(|c| c.iter().fold(T::zero(), |a, &b| a + b))
                        .collect();
                    let n = gb.len();
                    grads.add(*bias, vec_tensor(&[n], gb));
                }
                if needs(*x) {
                    grads.add(*x, g.clone());
                }
            }
            Op::Relu(x) => {
                if needs(*x) {
                    let out = &node.value;
                    let gx: Vec<T> = g
                        .data()
                        .iter()
                        .zip(out.data())
                        .map(|(&gv, &o)| if o > T::zero() { gv } else { T::zero() })
                        .collect();
                    grads.add(*x, vec_tensor(g.shape(), gx));
                }
            }
            Op::Dropout { x, mask } => {
                if needs(*x) {
                    let gx: Vec<T> = g.data().iter().zip(mask).map(|(&gv, &m)| gv * m).collect();
                    grads.add(*x, vec_tensor(g.shape(), gx));
                }
            }
            Op::Reshape(x) => {
                if needs(*x) {
                    let shape = val(*x).shape().to_vec();
                    grads.add(*x, vec_tensor(&shape, g.data().to_vec()));
                }
            }
            Op::Concat(a, b) => {
                let na = val(*a).len();
                if needs(*a) {
                    grads.add(*a, vec_tensor(&[na], g.data()[..na].to_vec()));
                }
                if needs(*b) {
                    let nb = g.len() - na;
                    grads.add(*b, vec_tensor(&[nb], g.data()[na..].to_vec()));
                }
            }
            Op::TileRows(x) => {
                if needs(*x) {
                    let d = val(*x).len();
                    let mut gx = vec![T::zero(); d];
                    for row in g.data().chunks(d) {
                        for (o, &gv) in gx.iter_mut().zip(row) {
                            *o = *o + gv;
                        }
                    }
                    grads.add(*x, vec_tensor(&[d], gx));
                }
            }
            Op::Softmax(z) => {
                if needs(*z) {
                    let y = node.value.data();
                    let s = dot(g.data(), y);
                    let gz: Vec<T> = g.data().iter().zip(y).map(|(&gv, &yv)| yv * (gv - s)).collect();
                    grads.add(*z, vec_tensor(g.shape(), gz));
                }
            }
            Op::CrossEntropy { probs, target } => {
                if needs(*probs) {
                    let p = val(*probs);
                    let mut gp = vec![T::zero(); p.len()];
                    let pt = p.data()[*target];
                    if pt > T::from_f64(CE_EPS) {
                        gp[*target] = -g.data()[0] / pt;
                    }
                    grads.add(*probs, vec_tensor(p.shape(), gp));
                }
            }
            Op::AlphaHead(z) => {
                if needs(*z) {
                    let a = node.value.data();
                    let gd = g.data();
                    let gz = vec![gd[0] * a[0] * (T::one() - a[0]), gd[1] * (T::one() - a[1] * a[1])];
                    grads.add(*z, vec_tensor(&[2], gz));
                }
            }
            Op::Sample { frames, alpha, cache } => {
                let fv = val(*frames);
                if needs(*frames) {
                    let gf = span::sample_backward_frames(fv.shape(), &cache.rows, g);
                    grads.add(*frames, gf);
                }
                if needs(*alpha) {
                    let (d1, d2) = span::sample_backward_alpha(fv, &cache.rows, g);
                    let j = &cache.jac;
                    let ga = vec![d1 * j[0] + d2 * j[2], d1 * j[1] + d2 * j[3]];
                    grads.add(*alpha, vec_tensor(&[2], ga));
                }
            }
            Op::SquareLoss { pred, target } => {
                if needs(*pred) {
                    let two = T::from_f64(2.0);
                    let g0 = g.data()[0];
                    let p = val(*pred);
                    let gp: Vec<T> = p.data().iter().zip(target).map(|(&a, &b)| two * (a - b) * g0).collect();
                    grads.add(*pred, vec_tensor(p.shape(), gp));
                }
            }
            Op::Sum(x) => {
                if needs(*x) {
                    let shape = val(*x).shape().to_vec();
                    grads.add(*x, Tensor::full(&shape, g.data()[0]));
                }
            }
            Op::Add(a, b) => {
                if needs(*a) {
                    grads.add(*a, g.clone());
                }
                if needs(*b) {
                    grads.add(*b, g.clone());
                }
            }
            Op::Scale(x, c) => {
                if needs(*x) {
                    grads.add(*x, g.map(|v| v * *c));
                }
            }
        }
    }
}

const CE_EPS: f64 = 1e-12;

fn vec_tensor<T: Scalar>(shape: &[usize], data: Vec<T>) -> Tensor<T> {
    Tensor::new(shape, data).expect("gradient shape matches its node")
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail = ca.remainder().iter().zip(cb.remainder()).fold(T::zero(), |s, (&x, &y)| s + x * y);
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

/// Gradient slots during a sweep: internal, or routed to external sinks.
struct Sink<'a, T> {
    grads: &'a mut [Option<Tensor<T>>],
    routes: &'a [Option<usize>],
    sinks: &'a mut [Option<Tensor<T>>],
}

impl<T: Scalar> Sink<'_, T> {
    fn slot(&mut self, v: Var) -> &mut Option<Tensor<T>> {
        match self.routes.get(v.0).copied().flatten() {
            Some(k) => &mut self.sinks[k],
            None => &mut self.grads[v.0],
        }
    }

    fn add(&mut self, v: Var, g: Tensor<T>) {
        match self.slot(v) {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }
}

/// Result of a reverse sweep.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `v`, or `None` when nothing downstream of `v` reached the root.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

/// Max-subtracted softmax of a vector.
pub fn softmax<T: Scalar>(z: &Tensor<T>) -> Tensor<T> {
    let m = z.data().iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let e: Vec<T> = z.data().iter().map(|&v| (v - m).libm_exp()).collect();
    let s = e.iter().fold(T::zero(), |a, &b| a + b);
    Tensor::new(z.shape(), e.into_iter().map(|v| v / s).collect()).expect("same shape")
}

/// Cross-entropy of probabilities `y_hat` against a one-hot `y`.
pub fn cross_entropy<T: Scalar>(y_hat: &Tensor<T>, y: &Tensor<T>) -> Result<T> {
    let target = one_hot_index(y)?;
    if y_hat.len() != y.len() {
        return Err(mismatch("cross_entropy", y_hat.shape(), y.shape()));
    }
    Ok(-y_hat.data()[target].max(T::from_f64(CE_EPS)).libm_ln())
}

/// Index of the single `1` in a one-hot vector.
pub fn one_hot_index<T: Scalar>(y: &Tensor<T>) -> Result<usize> {
    let mut idx = None;
    for (i, &v) in y.data().iter().enumerate() {
        if v == T::one() {
            if idx.is_some() {
                return Err(Error::NotOneHot);
            }
            idx = Some(i);
        } else if v != T::zero() {
            return Err(Error::NotOneHot);
        }
    }
    idx.ok_or(Error::NotOneHot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{max_relative_error, numeric_gradient};

    fn t(shape: &[usize], d: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, d).unwrap()
    }

    #[test]
    fn affine_zero_and_identity() {
        let x0 = Tensor::<f64>::zeros(&[2, 2]);
        let w = t(&[2, 2], &[1., 2., 3., 4.]);
        let b0 = Tensor::<f64>::zeros(&[2]);
        let mut g = Graph::new();
        let (xv, wv, bv) = (g.input(&x0), g.input(&w), g.input(&b0));
        let y = g.affine(xv, wv, bv).unwrap();
        assert_eq!(g.value(y).data(), &[0.0; 4]);

        let eye = t(&[2, 2], &[1., 0., 0., 1.]);
        let xi = g.input(&eye);
        let y = g.affine(xi, wv, bv).unwrap();
        assert_eq!(g.value(y).data(), &[1., 2., 3., 4.]);
    }

    #[test]
    fn affine_shape_error_names_shapes() {
        let x = Tensor::<f64>::zeros(&[3, 4]);
        let w = Tensor::<f64>::zeros(&[5, 2]);
        let b = Tensor::<f64>::zeros(&[2]);
        let mut g = Graph::new();
        let (xv, wv, bv) = (g.input(&x), g.input(&w), g.input(&b));
        match g.affine(xv, wv, bv) {
            Err(Error::ShapeMismatch { left, right, .. }) => {
                assert_eq!(left, vec![3, 4]);
                assert_eq!(right, vec![5, 2]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn conv_output_lengths() {
        let x = Tensor::<f64>::zeros(&[100, 3]);
        let f = Tensor::<f64>::zeros(&[1, 5, 1]);
        let mut g = Graph::new();
        let (xv, fv) = (g.input(&x), g.input(&f));
        let y = g.conv2d(xv, fv, (5, 1)).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 20, 3]);
    }

    #[test]
    fn conv_counting_case() {
        let x = Tensor::<f64>::full(&[5, 1], 1.0);
        let f = Tensor::<f64>::full(&[1, 5, 1], 1.0);
        let mut g = Graph::new();
        let (xv, fv) = (g.input(&x), g.input(&f));
        let y = g.conv2d(xv, fv, (1, 1)).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 1, 1]);
        assert_eq!(g.value(y).data(), &[5.0]);
    }

    #[test]
    fn conv_kernel_too_large() {
        let x = Tensor::<f64>::zeros(&[4, 3]);
        let f = Tensor::<f64>::zeros(&[2, 5, 1]);
        let mut g = Graph::new();
        let (xv, fv) = (g.input(&x), g.input(&f));
        assert!(matches!(g.conv2d(xv, fv, (1, 1)), Err(Error::KernelTooLarge { .. })));
    }

    #[test]
    fn softmax_examples() {
        let u = softmax(&Tensor::<f64>::zeros(&[6]));
        for &p in u.data() {
            assert!((p - 1.0 / 6.0).abs() < 1e-15);
        }
        let s = softmax(&t(&[2], &[1000.0, 0.0]));
        assert!(s.is_finite());
        assert!((s.data()[0] - 1.0).abs() < 1e-12 && s.data()[1] < 1e-300);
        let s = softmax(&t(&[3], &[1.0, 2.0, 3.0]));
        for (a, b) in s.data().iter().zip([0.0900, 0.2447, 0.6652]) {
            assert!((a - b).abs() < 1e-4);
        }
        assert!((s.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_examples() {
        let y = t(&[6], &[0., 0., 1., 0., 0., 0.]);
        assert_eq!(cross_entropy(&y, &y).unwrap(), 0.0);
        let u = Tensor::<f64>::full(&[6], 1.0 / 6.0);
        assert!((cross_entropy(&u, &y).unwrap() - 1.791759469228055).abs() < 1e-12);
        let bad = t(&[6], &[0., 0.5, 0.5, 0., 0., 0.]);
        assert_eq!(cross_entropy(&u, &bad), Err(Error::NotOneHot));
        assert_eq!(cross_entropy(&u, &Tensor::zeros(&[6])), Err(Error::NotOneHot));
    }

    #[test]
    fn softmax_cross_entropy_gradient_is_p_minus_y() {
        let z = t(&[4], &[0.3, -1.2, 2.0, 0.1]);
        let mut g = Graph::new();
        let zv = g.param(&z);
        let p = g.softmax(zv);
        let l = g.cross_entropy(p, 1).unwrap();
        let grads = g.backward(l);
        let gz = grads.get(zv).unwrap();
        let probs = softmax(&z);
        for k in 0..4 {
            let y = if k == 1 { 1.0 } else { 0.0 };
            assert!((gz.data()[k] - (probs.data()[k] - y)).abs() < 1e-12);
        }
        // and against central differences
        let num = numeric_gradient(&z, 1e-6, |zz| {
            let p = softmax(zz);
            -p.data()[1].libm_ln()
        });
        assert!(max_relative_error(gz.data(), num.data()) < 1e-6);
    }

    #[test]
    fn dropout_contracts() {
        let x = Tensor::<f64>::full(&[10], 2.0);
        let mut rng = crate::rng_from_seed(1);
        let mut g = Graph::new();
        let xv = g.input(&x);
        assert_eq!(g.dropout(xv, 1.0, Mode::Train, &mut rng).unwrap(), xv);
        assert_eq!(g.dropout(xv, 0.75, Mode::Infer, &mut rng).unwrap(), xv);
        assert!(g.dropout(xv, 0.0, Mode::Train, &mut rng).is_err());
        assert!(g.dropout(xv, 1.5, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn dropout_mean_preserved() {
        let x = Tensor::<f64>::full(&[1_000_000], 1.0);
        let mut rng = crate::rng_from_seed(42);
        let mut g = Graph::new();
        let xv = g.input(&x);
        let y = g.dropout(xv, 0.75, Mode::Train, &mut rng).unwrap();
        let mean = g.value(y).sum() / 1e6;
        assert!((0.99..=1.01).contains(&mean), "mean {mean}");
    }

    #[test]
    fn backward_visits_shared_node_once() {
        // y = sum(x) + sum(x): gradient 2 everywhere
        let x = t(&[3], &[1., 2., 3.]);
        let mut g = Graph::new();
        let xv = g.param(&x);
        let s1 = g.sum(xv);
        let s2 = g.sum(xv);
        let y = g.add(s1, s2).unwrap();
        let grads = g.backward(y);
        assert_eq!(grads.get(xv).unwrap().data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn detach_stops_gradient() {
        let x = t(&[2], &[1., 2.]);
        let mut g = Graph::new();
        let xv = g.param(&x);
        let d = g.detach(xv);
        let s = g.sum(d);
        let grads = g.backward(s);
        assert!(grads.get(xv).is_none());
    }
}
