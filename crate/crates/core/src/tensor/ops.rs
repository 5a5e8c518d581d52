//! Differentiable primitives. Each backward rule is expressed with other
//! primitives so that it records a graph when gradients of gradients are
//! requested.

use super::autograd::grad_enabled;
use super::conv::{col2im_raw, im2col_raw, ConvGeom};
use super::{numel, Element, Result, Tensor, TensorError};

#[derive(Debug, Clone)]
pub(crate) enum OpKind {
    Add,
    Sub,
    Mul,
    Neg,
    Scale(f64),
    AddScalar,
    MatMul { ta: bool, tb: bool },
    Reshape,
    Expand,
    SumTo,
    SwapAxes01,
    Upsample2x,
    SumPool2x,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
    Softplus,
    Rsqrt,
    Concat0,
    Slice0 { start: usize },
    Pad0 { start: usize },
    Im2Col(ConvGeom),
    Col2Im(ConvGeom),
}

pub(crate) struct Op<T: Element> {
    pub(crate) kind: OpKind,
    pub(crate) inputs: Vec<Tensor<T>>,
}

pub(crate) fn record<T: Element>(
    shape: Vec<usize>,
    data: Vec<T>,
    kind: OpKind,
    inputs: Vec<Tensor<T>>,
) -> Tensor<T> {
    let rg = grad_enabled() && inputs.iter().any(Tensor::requires_grad);
    let op = rg.then_some(Op { kind, inputs });
    Tensor::from_node(shape, data, rg, op)
}

fn same_shape<T: Element>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::Shape {
            op,
            expected: a.shape().to_vec(),
            got: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn require_4d<T: Element>(op: &'static str, x: &Tensor<T>) -> Result<[usize; 4]> {
    match *x.shape() {
        [n, c, h, w] => Ok([n, c, h, w]),
        _ => Err(TensorError::Invalid {
            op,
            msg: format!("expected a 4-D NCHW tensor, got shape {:?}", x.shape()),
        }),
    }
}

/// Input strides (0 on broadcast axes) for each output axis.
fn broadcast_strides(op: &'static str, small: &[usize], big: &[usize]) -> Result<Vec<usize>> {
    if small.is_empty() {
        return Ok(vec![0; big.len()]);
    }
    let compatible = small.len() == big.len()
        && small.iter().zip(big).all(|(&s, &b)| s == b || s == 1);
    if !compatible {
        return Err(TensorError::Shape {
            op,
            expected: big.to_vec(),
            got: small.to_vec(),
        });
    }
    let mut strides = vec![0; small.len()];
    let mut acc = 1;
    for d in (0..small.len()).rev() {
        strides[d] = if small[d] == 1 { 0 } else { acc };
        acc *= small[d];
    }
    Ok(strides)
}

/// Walks `big` in row-major order as maximal runs that are either a
/// broadcast of one small element (`inner_stride == 0`) or a contiguous
/// slice of the small tensor (`inner_stride == 1`). Calls
/// `f(big_start, small_start, len, inner_stride)` per run.
fn for_each_run(big: &[usize], strides: &[usize], mut f: impl FnMut(usize, usize, usize, usize)) {
    let mut dims = big.len();
    let mut len = 1;
    let mut inner_stride = 0;
    if dims > 0 {
        inner_stride = match (0..dims).rev().find(|&d| big[d] > 1) {
            Some(d) if strides[d] != 0 => 1,
            _ => 0,
        };
        while dims > 0 {
            let d = dims - 1;
            let fits = if big[d] == 1 {
                true
            } else if inner_stride == 0 {
                strides[d] == 0
            } else {
                strides[d] == len
            };
            if !fits {
                break;
            }
            len *= big[d];
            dims -= 1;
        }
    }
    let outer_dims = &big[..dims];
    let outer = numel(outer_dims);
    let mut idx = vec![0usize; dims];
    let mut base = 0usize;
    let mut out = 0usize;
    for _ in 0..outer {
        f(out, base, len, inner_stride);
        out += len;
        for d in (0..dims).rev() {
            idx[d] += 1;
            base += strides[d];
            if idx[d] < big[d] {
                break;
            }
            base -= strides[d] * big[d];
            idx[d] = 0;
        }
    }
}

impl<T: Element> Tensor<T> {
    fn zip_with(&self, other: &Tensor<T>, f: impl Fn(T, T) -> T) -> Vec<T> {
        self.data().iter().zip(other.data()).map(|(&a, &b)| f(a, b)).collect()
    }

    fn map(&self, f: impl Fn(T) -> T) -> Vec<T> {
        self.data().iter().map(|&a| f(a)).collect()
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("add", self, other)?;
        let data = self.zip_with(other, |a, b| a + b);
        Ok(record(self.shape().to_vec(), data, OpKind::Add, vec![self.clone(), other.clone()]))
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("sub", self, other)?;
        let data = self.zip_with(other, |a, b| a - b);
        Ok(record(self.shape().to_vec(), data, OpKind::Sub, vec![self.clone(), other.clone()]))
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("mul", self, other)?;
        let data = self.zip_with(other, |a, b| a * b);
        Ok(record(self.shape().to_vec(), data, OpKind::Mul, vec![self.clone(), other.clone()]))
    }

    pub fn neg(&self) -> Tensor<T> {
        record(self.shape().to_vec(), self.map(|a| -a), OpKind::Neg, vec![self.clone()])
    }

    pub fn scale(&self, c: f64) -> Tensor<T> {
        let k = T::c(c);
        record(self.shape().to_vec(), self.map(|a| a * k), OpKind::Scale(c), vec![self.clone()])
    }

    pub fn add_scalar(&self, c: f64) -> Tensor<T> {
        let k = T::c(c);
        record(self.shape().to_vec(), self.map(|a| a + k), OpKind::AddScalar, vec![self.clone()])
    }

    /// Matrix product `op(self)·op(other)` where `op` optionally transposes.
    pub fn matmul_t(&self, other: &Tensor<T>, ta: bool, tb: bool) -> Result<Tensor<T>> {
        let (ar, ac) = as_matrix("matmul", self)?;
        let (br, bc) = as_matrix("matmul", other)?;
        let (m, k, rsa, csa) = if ta { (ac, ar, 1, ac as isize) } else { (ar, ac, ac as isize, 1) };
        let (k2, n, rsb, csb) = if tb { (bc, br, 1, bc as isize) } else { (br, bc, bc as isize, 1) };
        if k != k2 {
            return Err(TensorError::Shape {
                op: "matmul",
                expected: vec![k, n],
                got: vec![k2, n],
            });
        }
        let mut out: Vec<T> = Vec::with_capacity(m * n);
        // SAFETY: dimensions and strides were derived from the row-major
        // shapes of `self` and `other`. With β = 0 the kernel writes every
        // element of the m×n output without reading it, so the length can
        // be set once it returns.
        unsafe {
            T::gemm(
                m,
                k,
                n,
                self.data().as_ptr(),
                rsa,
                csa,
                other.data().as_ptr(),
                rsb,
                csb,
                out.as_mut_ptr(),
                n as isize,
                1,
            );
            out.set_len(m * n);
        }
        Ok(record(vec![m, n], out, OpKind::MatMul { ta, tb }, vec![self.clone(), other.clone()]))
    }

    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.matmul_t(other, false, false)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        if numel(shape) != self.numel() {
            return Err(TensorError::Shape {
                op: "reshape",
                expected: shape.to_vec(),
                got: self.shape().to_vec(),
            });
        }
        Ok(record(shape.to_vec(), self.to_vec(), OpKind::Reshape, vec![self.clone()]))
    }

    /// Broadcasts size-1 axes (or a scalar) up to `shape`.
    pub fn expand(&self, shape: &[usize]) -> Result<Tensor<T>> {
        let strides = broadcast_strides("expand", self.shape(), shape)?;
        let mut out = vec![T::zero(); numel(shape)];
        let src = self.data();
        for_each_run(shape, &strides, |o, i, len, st| {
            if st == 0 {
                out[o..o + len].fill(src[i]);
            } else {
                out[o..o + len].copy_from_slice(&src[i..i + len]);
            }
        });
        Ok(record(shape.to_vec(), out, OpKind::Expand, vec![self.clone()]))
    }

    /// Sums over axes so that the result has `shape`; adjoint of [`expand`](Self::expand).
    pub fn sum_to(&self, shape: &[usize]) -> Result<Tensor<T>> {
        let strides = broadcast_strides("sum_to", shape, self.shape())?;
        let mut out = vec![T::zero(); numel(shape)];
        let src = self.data();
        for_each_run(self.shape(), &strides, |i, o, len, st| {
            if st == 0 {
                let mut acc = T::zero();
                for &v in &src[i..i + len] {
                    acc += v;
                }
                out[o] += acc;
            } else {
                for (d, &v) in out[o..o + len].iter_mut().zip(&src[i..i + len]) {
                    *d += v;
                }
            }
        });
        Ok(record(shape.to_vec(), out, OpKind::SumTo, vec![self.clone()]))
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&self) -> Tensor<T> {
        self.sum_to(&[]).expect("scalar target always broadcasts")
    }

    pub fn mean(&self) -> Tensor<T> {
        self.sum().scale(1.0 / self.numel() as f64)
    }

    /// `[A, B, ...] -> [B, A, ...]`.
    pub fn swap01(&self) -> Result<Tensor<T>> {
        if self.ndim() < 2 {
            return Err(TensorError::Invalid {
                op: "swap01",
                msg: format!("need at least 2 axes, got {:?}", self.shape()),
            });
        }
        let (a, b) = (self.shape()[0], self.shape()[1]);
        let rest = numel(&self.shape()[2..]);
        let src = self.data();
        let mut out = Vec::with_capacity(self.numel());
        for j in 0..b {
            for i in 0..a {
                let off = (i * b + j) * rest;
                out.extend_from_slice(&src[off..off + rest]);
            }
        }
        let mut shape = self.shape().to_vec();
        shape.swap(0, 1);
        Ok(record(shape, out, OpKind::SwapAxes01, vec![self.clone()]))
    }

    /// Nearest-neighbour 2x upsampling of an NCHW tensor.
    pub fn upsample_nearest2x(&self) -> Result<Tensor<T>> {
        let [n, c, h, w] = require_4d("upsample_nearest2x", self)?;
        let src = self.data();
        let (h2, w2) = (2 * h, 2 * w);
        let mut out = vec![T::zero(); n * c * h2 * w2];
        for p in 0..n * c {
            let s = &src[p * h * w..(p + 1) * h * w];
            let o = &mut out[p * h2 * w2..(p + 1) * h2 * w2];
            for y in 0..h2 {
                let row = &s[(y / 2) * w..(y / 2 + 1) * w];
                let orow = &mut o[y * w2..(y + 1) * w2];
                for (x, v) in orow.iter_mut().enumerate() {
                    *v = row[x / 2];
                }
            }
        }
        Ok(record(vec![n, c, h2, w2], out, OpKind::Upsample2x, vec![self.clone()]))
    }

    /// Sum over non-overlapping 2×2 windows; adjoint of nearest upsampling.
    pub fn sum_pool2x(&self) -> Result<Tensor<T>> {
        let [n, c, h, w] = require_4d("sum_pool2x", self)?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(TensorError::Invalid {
                op: "sum_pool2x",
                msg: format!("spatial size {h}x{w} is not even"),
            });
        }
        let (h2, w2) = (h / 2, w / 2);
        let src = self.data();
        let mut out = vec![T::zero(); n * c * h2 * w2];
        for p in 0..n * c {
            let s = &src[p * h * w..(p + 1) * h * w];
            let o = &mut out[p * h2 * w2..(p + 1) * h2 * w2];
            for y in 0..h {
                for x in 0..w {
                    o[(y / 2) * w2 + x / 2] += s[y * w + x];
                }
            }
        }
        Ok(record(vec![n, c, h2, w2], out, OpKind::SumPool2x, vec![self.clone()]))
    }

    pub fn avg_pool2x(&self) -> Result<Tensor<T>> {
        Ok(self.sum_pool2x()?.scale(0.25))
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor<T> {
        let k = T::c(slope);
        let data = self.map(|a| if a > T::zero() { a } else { a * k });
        record(self.shape().to_vec(), data, OpKind::LeakyRelu(slope), vec![self.clone()])
    }

    pub fn tanh(&self) -> Tensor<T> {
        record(self.shape().to_vec(), self.map(|a| a.tanh()), OpKind::Tanh, vec![self.clone()])
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        record(self.shape().to_vec(), self.map(sigmoid), OpKind::Sigmoid, vec![self.clone()])
    }

    /// `ln(1 + e^x)`, evaluated stably.
    pub fn softplus(&self) -> Tensor<T> {
        record(self.shape().to_vec(), self.map(softplus), OpKind::Softplus, vec![self.clone()])
    }

    /// `x^(-1/2)`; non-positive inputs yield non-finite values.
    pub fn rsqrt(&self) -> Tensor<T> {
        let data = self.map(|a| T::one() / a.sqrt());
        record(self.shape().to_vec(), data, OpKind::Rsqrt, vec![self.clone()])
    }

    /// Rows `start..start+len` along axis 0.
    pub fn slice0(&self, start: usize, len: usize) -> Result<Tensor<T>> {
        let d0 = *self.shape().first().ok_or(TensorError::Invalid {
            op: "slice0",
            msg: "scalar has no axis 0".into(),
        })?;
        if len == 0 || start + len > d0 {
            return Err(TensorError::Invalid {
                op: "slice0",
                msg: format!("range {start}..{} out of bounds for axis of {d0}", start + len),
            });
        }
        let row = self.numel() / d0;
        let data = self.data()[start * row..(start + len) * row].to_vec();
        let mut shape = self.shape().to_vec();
        shape[0] = len;
        Ok(record(shape, data, OpKind::Slice0 { start }, vec![self.clone()]))
    }

    /// Zero-pads along axis 0 so that `self` occupies `start..start+len` of `total` rows.
    fn pad0(&self, start: usize, total: usize) -> Tensor<T> {
        let d0 = self.shape()[0];
        let row = self.numel() / d0;
        let mut data = vec![T::zero(); total * row];
        data[start * row..(start + d0) * row].copy_from_slice(self.data());
        let mut shape = self.shape().to_vec();
        shape[0] = total;
        record(shape, data, OpKind::Pad0 { start }, vec![self.clone()])
    }

    pub(crate) fn im2col(&self, geom: ConvGeom) -> Result<Tensor<T>> {
        let [n, c, h, w] = require_4d("conv2d", self)?;
        debug_assert_eq!((c, h, w), (geom.c, geom.h, geom.w));
        let data = im2col_raw(self.data(), n, &geom);
        let shape = vec![geom.c * geom.k * geom.k, n * geom.ho() * geom.wo()];
        Ok(record(shape, data, OpKind::Im2Col(geom), vec![self.clone()]))
    }

    pub(crate) fn col2im(&self, geom: ConvGeom) -> Tensor<T> {
        let n = self.shape()[1] / (geom.ho() * geom.wo());
        let data = col2im_raw(self.data(), n, &geom);
        record(vec![n, geom.c, geom.h, geom.w], data, OpKind::Col2Im(geom), vec![self.clone()])
    }
}

/// Concatenates tensors along axis 0; trailing axes must agree.
pub fn concat0<T: Element>(parts: &[Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts.first().ok_or(TensorError::Invalid {
        op: "concat0",
        msg: "nothing to concatenate".into(),
    })?;
    let tail = &first.shape()[1..];
    let mut d0 = 0;
    let mut data = Vec::new();
    for p in parts {
        if p.ndim() == 0 || &p.shape()[1..] != tail {
            return Err(TensorError::Shape {
                op: "concat0",
                expected: first.shape().to_vec(),
                got: p.shape().to_vec(),
            });
        }
        d0 += p.shape()[0];
        data.extend_from_slice(p.data());
    }
    let mut shape = first.shape().to_vec();
    shape[0] = d0;
    Ok(record(shape, data, OpKind::Concat0, parts.to_vec()))
}

fn as_matrix<T: Element>(op: &'static str, t: &Tensor<T>) -> Result<(usize, usize)> {
    match *t.shape() {
        [r, c] => Ok((r, c)),
        _ => Err(TensorError::Invalid {
            op,
            msg: format!("expected a matrix, got shape {:?}", t.shape()),
        }),
    }
}

fn sigmoid<T: Element>(a: T) -> T {
    if a >= T::zero() {
        T::one() / (T::one() + (-a).exp())
    } else {
        let e = a.exp();
        e / (T::one() + e)
    }
}

fn softplus<T: Element>(a: T) -> T {
    a.max(T::zero()) + (-a.abs()).exp().ln_1p()
}

/// Gradients of `out` with respect to each input of its op, given the
/// upstream gradient `g`. Entries are `None` for inputs not requiring grad.
pub(crate) fn backward_op<T: Element>(
    op: &Op<T>,
    out: &Tensor<T>,
    g: &Tensor<T>,
) -> Result<Vec<Option<Tensor<T>>>> {
    let inp = &op.inputs;
    let needs = |i: usize| inp[i].requires_grad();
    let mut grads: Vec<Option<Tensor<T>>> = vec![None; inp.len()];
    match &op.kind {
        OpKind::Add => {
            for (i, gi) in grads.iter_mut().enumerate() {
                if needs(i) {
                    *gi = Some(g.clone());
                }
            }
        }
        OpKind::Sub => {
            if needs(0) {
                grads[0] = Some(g.clone());
            }
            if needs(1) {
                grads[1] = Some(g.neg());
            }
        }
        OpKind::Mul => {
            if needs(0) {
                grads[0] = Some(g.mul(&inp[1])?);
            }
            if needs(1) {
                grads[1] = Some(g.mul(&inp[0])?);
            }
        }
        OpKind::Neg => grads[0] = Some(g.neg()),
        OpKind::Scale(c) => grads[0] = Some(g.scale(*c)),
        OpKind::AddScalar => grads[0] = Some(g.clone()),
        OpKind::MatMul { ta, tb } => {
            let (a, b) = (&inp[0], &inp[1]);
            if needs(0) {
                grads[0] = Some(if *ta {
                    b.matmul_t(g, *tb, true)?
                } else {
                    g.matmul_t(b, false, !tb)?
                });
            }
            if needs(1) {
                grads[1] = Some(if *tb {
                    g.matmul_t(a, true, *ta)?
                } else {
                    a.matmul_t(g, !ta, false)?
                });
            }
        }
        OpKind::Reshape => grads[0] = Some(g.reshape(inp[0].shape())?),
        OpKind::Expand => grads[0] = Some(g.sum_to(inp[0].shape())?),
        OpKind::SumTo => grads[0] = Some(g.expand(inp[0].shape())?),
        OpKind::SwapAxes01 => grads[0] = Some(g.swap01()?),
        OpKind::Upsample2x => grads[0] = Some(g.sum_pool2x()?),
        OpKind::SumPool2x => grads[0] = Some(g.upsample_nearest2x()?),
        OpKind::LeakyRelu(slope) => {
            let k = T::c(*slope);
            let mask: Vec<T> =
                inp[0].data().iter().map(|&a| if a > T::zero() { T::one() } else { k }).collect();
            let mask = Tensor::from_node(inp[0].shape().to_vec(), mask, false, None);
            grads[0] = Some(g.mul(&mask)?);
        }
        OpKind::Tanh => {
            // 1 - y^2
            let d = out.mul(out)?.neg().add_scalar(1.0);
            grads[0] = Some(g.mul(&d)?);
        }
        OpKind::Sigmoid => {
            let d = out.mul(&out.neg().add_scalar(1.0))?;
            grads[0] = Some(g.mul(&d)?);
        }
        OpKind::Softplus => grads[0] = Some(g.mul(&inp[0].sigmoid())?),
        OpKind::Rsqrt => {
            // d/dx x^(-1/2) = -1/2 y^3
            let d = out.mul(out)?.mul(out)?.scale(-0.5);
            grads[0] = Some(g.mul(&d)?);
        }
        OpKind::Concat0 => {
            let mut start = 0;
            for (i, p) in inp.iter().enumerate() {
                let len = p.shape()[0];
                if needs(i) {
                    grads[i] = Some(g.slice0(start, len)?);
                }
                start += len;
            }
        }
        OpKind::Slice0 { start } => grads[0] = Some(g.pad0(*start, inp[0].shape()[0])),
        OpKind::Pad0 { start } => grads[0] = Some(g.slice0(*start, inp[0].shape()[0])?),
        OpKind::Im2Col(geom) => grads[0] = Some(g.col2im(*geom)),
        OpKind::Col2Im(geom) => grads[0] = Some(g.im2col(*geom)?),
    }
    Ok(grads)
}
