//! Reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every operation in execution order, so node inputs
//! always precede the node itself. [`Tape::backward`] walks the record in
//! reverse and accumulates gradients into every node that was derived from a
//! parameter. Constants (input images, targets, teacher-forced states) never
//! receive gradients, which keeps the first convolution's input gradient off
//! the hot path.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle of a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Conv2d {
        input: Var,
        kernel: Var,
        stride: usize,
        padding: usize,
    },
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    Relu(Var),
    Sigmoid(Var),
    Sqrt(Var),
    Clamp(Var, f64, f64),
    SoftmaxColumns(Var),
    GlobalAvgPool(Var),
    Reshape(Var),
    Index(Var, usize),
    Concat(Vec<Var>),
    Sum(Var),
    Mse(Var, Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of operations for one forward pass.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, zero-filled when `var`
    /// does not influence the loss.
    pub fn get(&self, var: Var) -> Tensor {
        let shape = self.shapes[var.0].clone();
        match &self.grads[var.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(&shape),
        }
    }

    pub fn has(&self, var: Var) -> bool {
        self.grads[var.0].is_some()
    }
}

fn check_finite(value: &Tensor, what: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "{}: {:?} vs {:?}",
            what,
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Output spatial size of a convolution, or `None` when it is not positive.
pub fn conv_output_size(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    if stride == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

// Range of output positions whose input index `o*stride + k - padding` lies in `0..len`.
fn valid_range(out_len: usize, len: usize, k: usize, stride: usize, padding: usize) -> (usize, usize) {
    let lo = if padding > k {
        (padding - k).div_ceil(stride)
    } else {
        0
    };
    let hi_num = (len + padding) as isize - 1 - k as isize;
    if hi_num < 0 {
        return (0, 0);
    }
    let hi = ((hi_num as usize) / stride + 1).min(out_len);
    (lo.min(hi), hi)
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, what: &str) -> Result<Var> {
        check_finite(&value, what)?;
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a trainable leaf.
    pub fn parameter(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> Result<f64> {
        self.nodes[v.0].value.item()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape().len() != 2 || bv.shape().len() != 2 || av.shape()[1] != bv.shape()[0] {
            return Err(Error::shape(format!(
                "matmul {:?} x {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        let (ad, bd) = (av.data(), bv.data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a_ip = ad[i * k + p];
                if a_ip == 0.0 {
                    continue;
                }
                let brow = &bd[p * n..(p + 1) * n];
                for (o, b) in row.iter_mut().zip(brow) {
                    *o += a_ip * b;
                }
            }
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg, "matmul")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.shape().len() != 2 {
            return Err(Error::shape(format!("transpose of {:?}", av.shape())));
        }
        let (m, n) = (av.shape()[0], av.shape()[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = av.data()[i * n + j];
            }
        }
        let rg = self.rg(a);
        self.push(Tensor::new(vec![n, m], out)?, Op::Transpose(a), rg, "transpose")
    }

    /// Cross-correlation of a `[C_in, H, W]` input with `[C_out, C_in, k, k]`
    /// kernels and zero padding.
    pub fn conv2d(&mut self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        let (iv, kv) = (self.value(input), self.value(kernel));
        let (is, ks) = (iv.shape(), kv.shape());
        if is.len() != 3 || ks.len() != 4 || ks[1] != is[0] || ks[2] != ks[3] {
            return Err(Error::shape(format!("conv2d input {:?} kernel {:?}", is, ks)));
        }
        let (cin, h, w) = (is[0], is[1], is[2]);
        let (cout, k) = (ks[0], ks[2]);
        let ho = conv_output_size(h, k, stride, padding)
            .ok_or_else(|| Error::shape(format!("conv2d output height not positive for {:?}", is)))?;
        let wo = conv_output_size(w, k, stride, padding)
            .ok_or_else(|| Error::shape(format!("conv2d output width not positive for {:?}", is)))?;
        let (id, kd) = (iv.data(), kv.data());
        let mut out = vec![0.0; cout * ho * wo];
        for o in 0..cout {
            let oplane = &mut out[o * ho * wo..(o + 1) * ho * wo];
            for c in 0..cin {
                let iplane = &id[c * h * w..(c + 1) * h * w];
                for ky in 0..k {
                    let (y0, y1) = valid_range(ho, h, ky, stride, padding);
                    for kx in 0..k {
                        let wgt = kd[((o * cin + c) * k + ky) * k + kx];
                        if wgt == 0.0 {
                            continue;
                        }
                        let (x0, x1) = valid_range(wo, w, kx, stride, padding);
                        for oy in y0..y1 {
                            let iy = oy * stride + ky - padding;
                            let irow = &iplane[iy * w..(iy + 1) * w];
                            let orow = &mut oplane[oy * wo..(oy + 1) * wo];
                            for ox in x0..x1 {
                                orow[ox] += wgt * irow[ox * stride + kx - padding];
                            }
                        }
                    }
                }
            }
        }
        let rg = self.rg(input) || self.rg(kernel);
        self.push(
            Tensor::new(vec![cout, ho, wo], out)?,
            Op::Conv2d {
                input,
                kernel,
                stride,
                padding,
            },
            rg,
            "conv2d",
        )
    }

    /// Adds `bias[i]` to every element of the `i`-th slice along the leading axis.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        let lead = xv.shape()[0];
        if bv.numel() != lead {
            return Err(Error::shape(format!(
                "bias of {} for leading dim {}",
                bv.numel(),
                lead
            )));
        }
        let inner = xv.numel() / lead;
        let mut out = xv.data().to_vec();
        for (i, chunk) in out.chunks_mut(inner).enumerate() {
            let b = bv.data()[i];
            chunk.iter_mut().for_each(|v| *v += b);
        }
        let shape = xv.shape().to_vec();
        let rg = self.rg(x) || self.rg(bias);
        self.push(Tensor::new(shape, out)?, Op::AddBias(x, bias), rg, "add_bias")
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape(av, bv, what)?;
        let out: Vec<f64> = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        let shape = av.shape().to_vec();
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::new(shape, out)?, op, rg, what)
    }

    fn unary(&mut self, a: Var, op: Op, what: &str, f: impl Fn(f64) -> f64) -> Result<Var> {
        let av = self.value(a);
        let out: Vec<f64> = av.data().iter().map(|x| f(*x)).collect();
        let shape = av.shape().to_vec();
        let rg = self.rg(a);
        self.push(Tensor::new(shape, out)?, op, rg, what)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Div(a, b), "div", |x, y| x / y)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, Op::Scale(a, c), "scale", |x| x * c)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, Op::AddConst(a), "add_const", |x| x + c)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Relu(a), "relu", |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Sigmoid(a), "sigmoid", sigmoid_scalar)
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        if self.value(a).data().iter().any(|x| *x <= 0.0) {
            return Err(Error::Domain("sqrt of non-positive value".into()));
        }
        self.unary(a, Op::Sqrt(a), "sqrt", f64::sqrt)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        if lo > hi {
            return Err(Error::invalid(format!("clamp range [{lo}, {hi}]")));
        }
        self.unary(a, Op::Clamp(a, lo, hi), "clamp", |x| x.clamp(lo, hi))
    }

    /// Column-wise softmax of a square matrix: entry `(i, j)` becomes
    /// `exp(m_ij) / sum_k exp(m_kj)`.
    pub fn softmax_columns(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let s = av.shape();
        if s.len() != 2 || s[0] != s[1] {
            return Err(Error::shape(format!("softmax_columns on {:?}", s)));
        }
        let n = s[0];
        let d = av.data();
        let mut out = vec![0.0; n * n];
        for j in 0..n {
            let max = (0..n).map(|i| d[i * n + j]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for i in 0..n {
                let e = (d[i * n + j] - max).exp();
                out[i * n + j] = e;
                total += e;
            }
            for i in 0..n {
                out[i * n + j] /= total;
            }
        }
        let rg = self.rg(a);
        self.push(Tensor::new(vec![n, n], out)?, Op::SoftmaxColumns(a), rg, "softmax_columns")
    }

    /// Per-channel mean of a `[C, H, W]` tensor.
    pub fn global_avg_pool(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let s = av.shape();
        if s.len() != 3 || s[1] == 0 || s[2] == 0 {
            return Err(Error::shape(format!("global_avg_pool on {:?}", s)));
        }
        let (c, hw) = (s[0], s[1] * s[2]);
        let out: Vec<f64> = av
            .data()
            .chunks(hw)
            .map(|ch| ch.iter().sum::<f64>() / hw as f64)
            .collect();
        let rg = self.rg(a);
        self.push(Tensor::new(vec![c], out)?, Op::GlobalAvgPool(a), rg, "global_avg_pool")
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        let rg = self.rg(a);
        self.push(value, Op::Reshape(a), rg, "reshape")
    }

    /// Selects one element (flat index) as a one-element tensor.
    pub fn index(&mut self, a: Var, i: usize) -> Result<Var> {
        let av = self.value(a);
        if i >= av.numel() {
            return Err(Error::shape(format!("index {} of {:?}", i, av.shape())));
        }
        let v = av.data()[i];
        let rg = self.rg(a);
        self.push(Tensor::scalar(v), Op::Index(a, i), rg, "index")
    }

    /// Concatenates flattened inputs into a one-dimensional tensor.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut out = Vec::new();
        for p in parts {
            out.extend_from_slice(self.value(*p).data());
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        self.push(Tensor::vector(out), Op::Concat(parts.to_vec()), rg, "concat")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg, "sum")
    }

    /// Mean of squared differences over all elements.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (pv, tv) = (self.value(pred), self.value(target));
        same_shape(pv, tv, "mse_loss")?;
        let n = pv.numel().max(1) as f64;
        let s: f64 = pv
            .data()
            .iter()
            .zip(tv.data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / n;
        let rg = self.rg(pred) || self.rg(target);
        self.push(Tensor::scalar(s), Op::Mse(pred, target), rg, "mse_loss")
    }

    /// Reverse accumulation from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.numel()]);
        f(slot);
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                let (ad, bd) = (av.data(), bv.data());
                self.accumulate(grads, *a, |ga| {
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += g[i * n + j] * bd[p * n + j];
                            }
                            ga[i * k + p] += s;
                        }
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for i in 0..m {
                        for p in 0..k {
                            let a_ip = ad[i * k + p];
                            if a_ip == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                gb[p * n + j] += a_ip * g[i * n + j];
                            }
                        }
                    }
                });
            }
            Op::Transpose(a) => {
                let s = self.value(*a).shape();
                let (m, n) = (s[0], s[1]);
                self.accumulate(grads, *a, |ga| {
                    for i in 0..m {
                        for j in 0..n {
                            ga[i * n + j] += g[j * m + i];
                        }
                    }
                });
            }
            Op::Conv2d {
                input,
                kernel,
                stride,
                padding,
            } => self.conv2d_backward(*input, *kernel, *stride, *padding, node, g, grads),
            Op::AddBias(x, bias) => {
                self.accumulate(grads, *x, |gx| gx.iter_mut().zip(g).for_each(|(a, b)| *a += b));
                let lead = self.value(*bias).numel();
                let inner = g.len() / lead;
                self.accumulate(grads, *bias, |gb| {
                    for (i, chunk) in g.chunks(inner).enumerate() {
                        gb[i] += chunk.iter().sum::<f64>();
                    }
                });
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                self.accumulate(grads, *b, |gb| gb.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                self.accumulate(grads, *b, |gb| gb.iter_mut().zip(g).for_each(|(x, y)| *x -= y));
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] * bd[i];
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for i in 0..gb.len() {
                        gb[i] += g[i] * ad[i];
                    }
                });
            }
            Op::Div(a, b) => {
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] / bd[i];
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for i in 0..gb.len() {
                        gb[i] -= g[i] * ad[i] / (bd[i] * bd[i]);
                    }
                });
            }
            Op::Scale(a, c) => {
                self.accumulate(grads, *a, |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += c * y));
            }
            Op::AddConst(a) | Op::Reshape(a) => {
                self.accumulate(grads, *a, |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            }
            Op::Relu(a) => {
                let ad = self.value(*a).data();
                self.accumulate(grads, *a, |ga| {
                    for i in 0..ga.len() {
                        if ad[i] > 0.0 {
                            ga[i] += g[i];
                        }
                    }
                });
            }
            Op::Sigmoid(a) => {
                self.accumulate(grads, *a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] * out[i] * (1.0 - out[i]);
                    }
                });
            }
            Op::Sqrt(a) => {
                self.accumulate(grads, *a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] * 0.5 / out[i];
                    }
                });
            }
            Op::Clamp(a, lo, hi) => {
                let ad = self.value(*a).data();
                self.accumulate(grads, *a, |ga| {
                    for i in 0..ga.len() {
                        if ad[i] >= *lo && ad[i] <= *hi {
                            ga[i] += g[i];
                        }
                    }
                });
            }
            Op::SoftmaxColumns(a) => {
                let n = node.value.shape()[0];
                self.accumulate(grads, *a, |ga| {
                    for j in 0..n {
                        let dot: f64 = (0..n).map(|i| out[i * n + j] * g[i * n + j]).sum();
                        for i in 0..n {
                            ga[i * n + j] += out[i * n + j] * (g[i * n + j] - dot);
                        }
                    }
                });
            }
            Op::GlobalAvgPool(a) => {
                let s = self.value(*a).shape();
                let hw = s[1] * s[2];
                self.accumulate(grads, *a, |ga| {
                    for (c, chunk) in ga.chunks_mut(hw).enumerate() {
                        let share = g[c] / hw as f64;
                        chunk.iter_mut().for_each(|x| *x += share);
                    }
                });
            }
            Op::Index(a, i) => {
                self.accumulate(grads, *a, |ga| ga[*i] += g[0]);
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).numel();
                    let slice = &g[offset..offset + len];
                    self.accumulate(grads, *p, |gp| gp.iter_mut().zip(slice).for_each(|(x, y)| *x += y));
                    offset += len;
                }
            }
            Op::Sum(a) => {
                self.accumulate(grads, *a, |ga| ga.iter_mut().for_each(|x| *x += g[0]));
            }
            Op::Mse(p, t) => {
                let (pd, td) = (self.value(*p).data(), self.value(*t).data());
                let n = pd.len().max(1) as f64;
                self.accumulate(grads, *p, |gp| {
                    for i in 0..gp.len() {
                        gp[i] += g[0] * 2.0 * (pd[i] - td[i]) / n;
                    }
                });
                self.accumulate(grads, *t, |gt| {
                    for i in 0..gt.len() {
                        gt[i] -= g[0] * 2.0 * (pd[i] - td[i]) / n;
                    }
                });
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv2d_backward(
        &self,
        input: Var,
        kernel: Var,
        stride: usize,
        padding: usize,
        node: &Node,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let (iv, kv) = (self.value(input), self.value(kernel));
        let (cin, h, w) = (iv.shape()[0], iv.shape()[1], iv.shape()[2]);
        let (cout, k) = (kv.shape()[0], kv.shape()[2]);
        let (ho, wo) = (node.value.shape()[1], node.value.shape()[2]);
        let (id, kd) = (iv.data(), kv.data());
        self.accumulate(grads, kernel, |gk| {
            for o in 0..cout {
                let gplane = &g[o * ho * wo..(o + 1) * ho * wo];
                for c in 0..cin {
                    let iplane = &id[c * h * w..(c + 1) * h * w];
                    for ky in 0..k {
                        let (y0, y1) = valid_range(ho, h, ky, stride, padding);
                        for kx in 0..k {
                            let (x0, x1) = valid_range(wo, w, kx, stride, padding);
                            let mut s = 0.0;
                            for oy in y0..y1 {
                                let iy = oy * stride + ky - padding;
                                let irow = &iplane[iy * w..(iy + 1) * w];
                                let grow = &gplane[oy * wo..(oy + 1) * wo];
                                for ox in x0..x1 {
                                    s += grow[ox] * irow[ox * stride + kx - padding];
                                }
                            }
                            gk[((o * cin + c) * k + ky) * k + kx] += s;
                        }
                    }
                }
            }
        });
        self.accumulate(grads, input, |gi| {
            for o in 0..cout {
                let gplane = &g[o * ho * wo..(o + 1) * ho * wo];
                for c in 0..cin {
                    let iplane = &mut gi[c * h * w..(c + 1) * h * w];
                    for ky in 0..k {
                        let (y0, y1) = valid_range(ho, h, ky, stride, padding);
                        for kx in 0..k {
                            let wgt = kd[((o * cin + c) * k + ky) * k + kx];
                            let (x0, x1) = valid_range(wo, w, kx, stride, padding);
                            for oy in y0..y1 {
                                let iy = oy * stride + ky - padding;
                                let grow = &gplane[oy * wo..(oy + 1) * wo];
                                let irow = &mut iplane[iy * w..(iy + 1) * w];
                                for ox in x0..x1 {
                                    irow[ox * stride + kx - padding] += wgt * grow[ox];
                                }
                            }
                        }
                    }
                }
            }
        });
    }
}
