use std::collections::HashMap;
use std::f64::consts::PI;

use super::tensor::{gemm, numel, Tensor};
use super::{ParameterStore, TensorError};
use crate::curves::{chamfer_c2c_with_grad, CubicBezier};
use crate::geometry::Point2;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Affine(Var, f64),
    Relu(Var),
    MatMul(Var, Var),
    Bmm { a: Var, b: Var, ta: bool, tb: bool },
    Conv2d { x: Var, w: Var, bias: Var, stride: usize, pad: usize, cols: Vec<f64> },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Softmax(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Reshape(Var),
    Permute { x: Var, perm: Vec<usize> },
    SumAll(Var),
    MeanAll(Var),
    SumLast(Var),
    AvgPool { x: Var },
    FourierPe { x: Var },
    Chamfer { ctrl: Var, grads: Vec<[f64; 8]> },
}

struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    op: Op,
    requires_grad: bool,
}

/// Reverse-mode autodiff tape. Nodes are appended in evaluation order, so
/// a single reverse sweep visits every node after all of its consumers.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
}

fn mismatch(op: &str, shapes: &[&[usize]]) -> TensorError {
    TensorError::ShapeMismatch(format!("{op}: incompatible shapes {shapes:?}"))
}

/// Canvas-coordinate Fourier features: for `k = 1..=dim/4` the block
/// `[sin kπx, sin kπy, cos kπx, cos kπy]`.
pub fn fourier_features(x: f64, y: f64, dim: usize, out: &mut [f64]) {
    for k in 0..dim / 4 {
        let f = (k + 1) as f64 * PI;
        let (sx, cx) = (f * x).sin_cos();
        let (sy, cy) = (f * y).sin_cos();
        out[4 * k..4 * k + 4].copy_from_slice(&[sx, sy, cx, cy]);
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, grad: None, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: t, grad: None, op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives a gradient.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: t, grad: None, op: Op::Leaf, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Leaf bound to a named parameter; repeated calls share one node.
    pub fn param(&mut self, store: &ParameterStore, name: &str) -> Result<Var, TensorError> {
        if let Some(v) = self.params.get(name) {
            return Ok(*v);
        }
        let t = store.get(name).ok_or_else(|| TensorError::UnknownParam(name.to_string()))?.clone();
        let v = self.input(t);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let n = &self.nodes[v.0];
        n.grad.as_ref().map(|g| Tensor::new(n.value.shape().to_vec(), g.clone()).expect("grad matches value"))
    }

    /// Gradients of every parameter touched by this graph.
    pub fn param_grads(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> = self
            .params
            .iter()
            .map(|(name, v)| {
                let g = self.grad(*v).unwrap_or_else(|| Tensor::zeros(self.shape(*v)));
                (name.clone(), g)
            })
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    // ---- elementwise ----

    fn zip(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(name, &[ta.shape(), tb.shape()]));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(t, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn square(&mut self, a: Var) -> Result<Var, TensorError> {
        self.mul(a, a)
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|v| scale * v + shift).collect();
        let t = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        self.push(t, Op::Affine(x, scale), &[x])
    }

    /// Adds `b` (shape `[n]`) to every row of `x` (shape `[.., n]`).
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var, TensorError> {
        let (tx, tb) = (self.value(x), self.value(b));
        let n = *tx.shape().last().unwrap_or(&0);
        if tb.shape() != [n] {
            return Err(mismatch("add_bias", &[tx.shape(), tb.shape()]));
        }
        let bias = tb.data();
        let data = tx.data().chunks(n.max(1)).flat_map(|row| row.iter().zip(bias).map(|(a, b)| a + b)).collect();
        let t = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(t, Op::AddBias(x, b), &[x, b]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|v| v.max(0.0)).collect();
        let t = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        self.push(t, Op::Relu(x), &[x])
    }

    // ---- linear algebra ----

    /// `x` of shape `[.., k]` times a matrix `w` of shape `[k, n]`.
    pub fn matmul(&mut self, x: Var, w: Var) -> Result<Var, TensorError> {
        let (tx, tw) = (self.value(x), self.value(w));
        let k = *tx.shape().last().unwrap_or(&0);
        if tw.shape().len() != 2 || tw.shape()[0] != k || tx.shape().is_empty() {
            return Err(mismatch("matmul", &[tx.shape(), tw.shape()]));
        }
        let n = tw.shape()[1];
        let m = tx.len() / k.max(1);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, 1.0, (tx.data(), k as isize, 1), (tw.data(), n as isize, 1), 0.0, (&mut out, n as isize, 1));
        let mut shape = tx.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::MatMul(x, w), &[x, w]))
    }

    /// Batched `op(a[i]) op(b[i])` over shapes `[B, r, c]`, where `op`
    /// transposes when the matching flag is set.
    pub fn bmm(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(mismatch("bmm", &[&sa, &sb]));
        }
        let (m, k) = if ta { (sa[2], sa[1]) } else { (sa[1], sa[2]) };
        let (k2, n) = if tb { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if k != k2 {
            return Err(mismatch("bmm", &[&sa, &sb]));
        }
        let batch = sa[0];
        let mut out = vec![0.0; batch * m * n];
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let (rsa, csa) = strides(sa[1], sa[2], ta);
        let (rsb, csb) = strides(sb[1], sb[2], tb);
        for i in 0..batch {
            gemm(
                m,
                k,
                n,
                1.0,
                (&da[i * sa[1] * sa[2]..], rsa, csa),
                (&db[i * sb[1] * sb[2]..], rsb, csb),
                0.0,
                (&mut out[i * m * n..], n as isize, 1),
            );
        }
        let t = Tensor::new(vec![batch, m, n], out)?;
        Ok(self.push(t, Op::Bmm { a, b, ta, tb }, &[a, b]))
    }

    /// 2D convolution of `x [B, Cin, H, W]` with `w [Cout, Cin, kh, kw]`
    /// and per-channel `bias [Cout]`, zero padding `pad`.
    pub fn conv2d(&mut self, x: Var, w: Var, bias: Var, stride: usize, pad: usize) -> Result<Var, TensorError> {
        let (sx, sw, sbias) = (self.shape(x).to_vec(), self.shape(w).to_vec(), self.shape(bias).to_vec());
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[1] || sbias != [sw[0]] || stride == 0 {
            return Err(mismatch("conv2d", &[&sx, &sw, &sbias]));
        }
        let geo = ConvGeom::new(&sx, &sw, stride, pad).ok_or_else(|| mismatch("conv2d", &[&sx, &sw]))?;
        let (kk, p) = (geo.kdim(), geo.ho * geo.wo);
        let mut cols = vec![0.0; geo.b * kk * p];
        let xd = self.value(x).data();
        for bi in 0..geo.b {
            geo.im2col(&xd[bi * geo.cin * geo.h * geo.w..], &mut cols[bi * kk * p..(bi + 1) * kk * p]);
        }
        let mut out = vec![0.0; geo.b * geo.cout * p];
        let (wd, bd) = (self.value(w).data(), self.value(bias).data());
        for bi in 0..geo.b {
            let o = &mut out[bi * geo.cout * p..(bi + 1) * geo.cout * p];
            for (c, row) in o.chunks_mut(p).enumerate() {
                row.fill(bd[c]);
            }
            gemm(geo.cout, kk, p, 1.0, (wd, kk as isize, 1), (&cols[bi * kk * p..], p as isize, 1), 1.0, (o, p as isize, 1));
        }
        let t = Tensor::new(vec![geo.b, geo.cout, geo.ho, geo.wo], out)?;
        Ok(self.push(t, Op::Conv2d { x, w, bias, stride, pad, cols }, &[x, w, bias]))
    }

    // ---- normalization ----

    /// Normalizes over the last axis, then applies gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var, TensorError> {
        let (tx, tg, tb) = (self.value(x), self.value(gamma), self.value(beta));
        let n = *tx.shape().last().unwrap_or(&0);
        if n == 0 || tg.shape() != [n] || tb.shape() != [n] {
            return Err(mismatch("layer_norm", &[tx.shape(), tg.shape(), tb.shape()]));
        }
        let rows = tx.len() / n;
        let mut xhat = vec![0.0; tx.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; tx.len()];
        for r in 0..rows {
            let row = &tx.data()[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[r] = is;
            for j in 0..n {
                let h = (row[j] - mean) * is;
                xhat[r * n + j] = h;
                out[r * n + j] = tg.data()[j] * h + tb.data()[j];
            }
        }
        let t = Tensor::new(tx.shape().to_vec(), out)?;
        Ok(self.push(t, Op::LayerNorm { x, gamma, beta, xhat, inv_std }, &[x, gamma, beta]))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let n = (*tx.shape().last().unwrap_or(&1)).max(1);
        let mut out = tx.data().to_vec();
        for row in out.chunks_mut(n) {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let t = Tensor::new(tx.shape().to_vec(), out).expect("same shape");
        self.push(t, Op::Softmax(x), &[x])
    }

    // ---- shape ----

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = self.shape(*inputs.first().ok_or_else(|| mismatch("concat", &[]))?).to_vec();
        if axis >= first.len() {
            return Err(mismatch("concat", &[&first]));
        }
        let mut total = 0;
        for v in inputs {
            let s = self.shape(*v);
            let ok = s.len() == first.len() && s.iter().zip(&first).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(mismatch("concat", &[&first, s]));
            }
            total += s[axis];
        }
        let outer = numel(&first[..axis]);
        let inner = numel(&first[axis + 1..]);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in inputs {
                let t = self.value(*v);
                let block = t.shape()[axis] * inner;
                out.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::Concat { inputs: inputs.to_vec(), axis }, inputs))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let t = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(t, Op::Reshape(x), &[x]))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var, TensorError> {
        let s = self.shape(x).to_vec();
        let mut seen = vec![false; s.len()];
        if perm.len() != s.len() || perm.iter().any(|&p| p >= s.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(TensorError::ShapeMismatch(format!("permute: {perm:?} is not a permutation of {s:?}")));
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| s[p]).collect();
        let src = permute_offsets(&s, perm);
        let d = self.value(x).data();
        let out = src.iter().map(|&i| d[i]).collect();
        let t = Tensor::new(out_shape, out)?;
        Ok(self.push(t, Op::Permute { x, perm: perm.to_vec() }, &[x]))
    }

    // ---- reductions ----

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(x), &[x])
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.len().max(1) as f64;
        self.push(Tensor::scalar(s), Op::MeanAll(x), &[x])
    }

    /// Sums over the last axis.
    pub fn sum_last(&mut self, x: Var) -> Result<Var, TensorError> {
        let t = self.value(x);
        let Some((&n, lead)) = t.shape().split_last() else {
            return Err(mismatch("sum_last", &[t.shape()]));
        };
        let out = t.data().chunks(n.max(1)).map(|r| r.iter().sum()).collect();
        let t = Tensor::new(lead.to_vec(), out)?;
        Ok(self.push(t, Op::SumLast(x), &[x]))
    }

    /// Adaptive average pooling of `[B, C, H, W]` to `[B, C, oh, ow]`.
    pub fn adaptive_avg_pool(&mut self, x: Var, oh: usize, ow: usize) -> Result<Var, TensorError> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 || oh == 0 || ow == 0 || oh > s[2] || ow > s[3] {
            return Err(mismatch("adaptive_avg_pool", &[&s]));
        }
        let d = self.value(x).data();
        let (h, w) = (s[2], s[3]);
        let mut out = vec![0.0; s[0] * s[1] * oh * ow];
        for plane in 0..s[0] * s[1] {
            let src = &d[plane * h * w..];
            for i in 0..oh {
                let (r0, r1) = pool_range(i, oh, h);
                for j in 0..ow {
                    let (c0, c1) = pool_range(j, ow, w);
                    let mut acc = 0.0;
                    for r in r0..r1 {
                        acc += src[r * w + c0..r * w + c1].iter().sum::<f64>();
                    }
                    out[plane * oh * ow + i * ow + j] = acc / ((r1 - r0) * (c1 - c0)) as f64;
                }
            }
        }
        let t = Tensor::new(vec![s[0], s[1], oh, ow], out)?;
        Ok(self.push(t, Op::AvgPool { x }, &[x]))
    }

    // ---- domain ops ----

    /// Fourier features of points `x [.., 2]`, giving `[.., dim]`.
    pub fn fourier_pe(&mut self, x: Var, dim: usize) -> Result<Var, TensorError> {
        let t = self.value(x);
        if t.shape().last() != Some(&2) || dim == 0 || dim % 4 != 0 {
            return Err(mismatch("fourier_pe", &[t.shape(), &[dim]]));
        }
        let rows = t.len() / 2;
        let mut out = vec![0.0; rows * dim];
        for r in 0..rows {
            fourier_features(t.data()[2 * r], t.data()[2 * r + 1], dim, &mut out[r * dim..(r + 1) * dim]);
        }
        let mut shape = t.shape().to_vec();
        *shape.last_mut().unwrap() = dim;
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::FourierPe { x }, &[x]))
    }

    /// Curve-to-segment Chamfer distance per row of control points
    /// `ctrl [Q, 8]` against constant segments, giving `[Q]`.
    pub fn chamfer_rows(&mut self, ctrl: Var, segments: &[Vec<Point2>]) -> Result<Var, TensorError> {
        let t = self.value(ctrl);
        if t.shape().len() != 2 || t.shape()[1] != 8 || t.shape()[0] != segments.len() {
            return Err(mismatch("chamfer_rows", &[t.shape(), &[segments.len()]]));
        }
        let mut vals = Vec::with_capacity(segments.len());
        let mut grads = Vec::with_capacity(segments.len());
        for (row, seg) in t.data().chunks(8).zip(segments) {
            let (v, g) = chamfer_c2c_with_grad(&CubicBezier::from_slice(row), seg);
            vals.push(v);
            grads.push(g);
        }
        let t = Tensor::new(vec![segments.len()], vals)?;
        Ok(self.push(t, Op::Chamfer { ctrl, grads }, &[ctrl]))
    }

    // ---- backward ----

    /// Accumulates d(loss)/d(node) into every node that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if self.value(loss).len() != 1 {
            return Err(TensorError::ShapeMismatch(format!("backward needs a scalar, got {:?}", self.shape(loss))));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else { continue };
            let contribs = self.local_grads(i, &g);
            self.nodes[i].grad = Some(g);
            for (v, c) in contribs {
                let node = &mut self.nodes[v.0];
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&c).for_each(|(a, b)| *a += b),
                    None => node.grad = Some(c),
                }
            }
        }
        Ok(())
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn local_grads(&self, i: usize, g: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let mut out = Vec::new();
        let val = |v: Var| self.nodes[v.0].value.data();
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                out.push((*a, g.to_vec()));
                out.push((*b, g.to_vec()));
            }
            Op::Sub(a, b) => {
                out.push((*a, g.to_vec()));
                out.push((*b, g.iter().map(|v| -v).collect()));
            }
            Op::Mul(a, b) => {
                out.push((*a, g.iter().zip(val(*b)).map(|(g, y)| g * y).collect()));
                out.push((*b, g.iter().zip(val(*a)).map(|(g, x)| g * x).collect()));
            }
            Op::AddBias(x, b) => {
                out.push((*x, g.to_vec()));
                if self.needs(*b) {
                    let n = val(*b).len();
                    let mut gb = vec![0.0; n];
                    for row in g.chunks(n) {
                        gb.iter_mut().zip(row).for_each(|(a, v)| *a += v);
                    }
                    out.push((*b, gb));
                }
            }
            Op::Affine(x, s) => out.push((*x, g.iter().map(|v| v * s).collect())),
            Op::Relu(x) => out.push((*x, g.iter().zip(val(*x)).map(|(g, x)| if *x > 0.0 { *g } else { 0.0 }).collect())),
            Op::MatMul(x, w) => {
                let (tx, tw) = (&self.nodes[x.0].value, &self.nodes[w.0].value);
                let (k, n) = (tw.shape()[0], tw.shape()[1]);
                let m = tx.len() / k.max(1);
                if self.needs(*x) {
                    let mut gx = vec![0.0; m * k];
                    gemm(m, n, k, 1.0, (g, n as isize, 1), (tw.data(), 1, n as isize), 0.0, (&mut gx, k as isize, 1));
                    out.push((*x, gx));
                }
                if self.needs(*w) {
                    let mut gw = vec![0.0; k * n];
                    gemm(k, m, n, 1.0, (tx.data(), 1, k as isize), (g, n as isize, 1), 0.0, (&mut gw, n as isize, 1));
                    out.push((*w, gw));
                }
            }
            Op::Bmm { a, b, ta, tb } => {
                let (sa, sb) = (self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape());
                let (m, k) = if *ta { (sa[2], sa[1]) } else { (sa[1], sa[2]) };
                let n = if *tb { sb[1] } else { sb[2] };
                let (rsa, csa) = strides(sa[1], sa[2], *ta);
                let (rsb, csb) = strides(sb[1], sb[2], *tb);
                let (na, nb) = (sa[1] * sa[2], sb[1] * sb[2]);
                let batch = sa[0];
                if self.needs(*a) {
                    // d op(A) = G op(B)^T, written through op(A)'s strides.
                    let mut ga = vec![0.0; batch * na];
                    for i in 0..batch {
                        gemm(
                            m,
                            n,
                            k,
                            1.0,
                            (&g[i * m * n..], n as isize, 1),
                            (&val(*b)[i * nb..], csb, rsb),
                            0.0,
                            (&mut ga[i * na..], rsa, csa),
                        );
                    }
                    out.push((*a, ga));
                }
                if self.needs(*b) {
                    // d op(B) = op(A)^T G.
                    let mut gb = vec![0.0; batch * nb];
                    for i in 0..batch {
                        gemm(
                            k,
                            m,
                            n,
                            1.0,
                            (&val(*a)[i * na..], csa, rsa),
                            (&g[i * m * n..], n as isize, 1),
                            0.0,
                            (&mut gb[i * nb..], rsb, csb),
                        );
                    }
                    out.push((*b, gb));
                }
            }
            Op::Conv2d { x, w, bias, stride, pad, cols } => {
                let (sx, sw) = (self.nodes[x.0].value.shape(), self.nodes[w.0].value.shape());
                let geo = ConvGeom::new(sx, sw, *stride, *pad).expect("validated in forward");
                let (kk, p) = (geo.kdim(), geo.ho * geo.wo);
                if self.needs(*bias) {
                    let mut gb = vec![0.0; geo.cout];
                    for bi in 0..geo.b {
                        for (c, row) in g[bi * geo.cout * p..(bi + 1) * geo.cout * p].chunks(p).enumerate() {
                            gb[c] += row.iter().sum::<f64>();
                        }
                    }
                    out.push((*bias, gb));
                }
                if self.needs(*w) {
                    let mut gw = vec![0.0; geo.cout * kk];
                    for bi in 0..geo.b {
                        gemm(
                            geo.cout,
                            p,
                            kk,
                            1.0,
                            (&g[bi * geo.cout * p..], p as isize, 1),
                            (&cols[bi * kk * p..], 1, p as isize),
                            1.0,
                            (&mut gw, kk as isize, 1),
                        );
                    }
                    out.push((*w, gw));
                }
                if self.needs(*x) {
                    let mut gx = vec![0.0; numel(sx)];
                    let mut gcols = vec![0.0; kk * p];
                    for bi in 0..geo.b {
                        gemm(
                            kk,
                            geo.cout,
                            p,
                            1.0,
                            (val(*w), 1, kk as isize),
                            (&g[bi * geo.cout * p..], p as isize, 1),
                            0.0,
                            (&mut gcols, p as isize, 1),
                        );
                        geo.col2im(&gcols, &mut gx[bi * geo.cin * geo.h * geo.w..(bi + 1) * geo.cin * geo.h * geo.w]);
                    }
                    out.push((*x, gx));
                }
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let n = val(*gamma).len();
                let gam = val(*gamma);
                if self.needs(*gamma) || self.needs(*beta) {
                    let mut gg = vec![0.0; n];
                    let mut gbeta = vec![0.0; n];
                    for (grow, hrow) in g.chunks(n).zip(xhat.chunks(n)) {
                        for j in 0..n {
                            gg[j] += grow[j] * hrow[j];
                            gbeta[j] += grow[j];
                        }
                    }
                    out.push((*gamma, gg));
                    out.push((*beta, gbeta));
                }
                if self.needs(*x) {
                    let mut gx = vec![0.0; g.len()];
                    for r in 0..inv_std.len() {
                        let grow = &g[r * n..(r + 1) * n];
                        let hrow = &xhat[r * n..(r + 1) * n];
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for j in 0..n {
                            let dh = grow[j] * gam[j];
                            s1 += dh;
                            s2 += dh * hrow[j];
                        }
                        for j in 0..n {
                            let dh = grow[j] * gam[j];
                            gx[r * n + j] = inv_std[r] * (dh - s1 / n as f64 - hrow[j] * s2 / n as f64);
                        }
                    }
                    out.push((*x, gx));
                }
            }
            Op::Softmax(x) => {
                let y = self.nodes[i].value.data();
                let n = (*self.nodes[i].value.shape().last().unwrap_or(&1)).max(1);
                let mut gx = vec![0.0; y.len()];
                for ((yr, gr), out_r) in y.chunks(n).zip(g.chunks(n)).zip(gx.chunks_mut(n)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        out_r[j] = yr[j] * (gr[j] - dot);
                    }
                }
                out.push((*x, gx));
            }
            Op::Concat { inputs, axis } => {
                let shape = self.nodes[i].value.shape();
                let outer = numel(&shape[..*axis]);
                let inner = numel(&shape[axis + 1..]);
                let total = shape[*axis] * inner;
                let mut offset = 0;
                for v in inputs {
                    let block = self.nodes[v.0].value.shape()[*axis] * inner;
                    if self.needs(*v) {
                        let mut gv = Vec::with_capacity(outer * block);
                        for o in 0..outer {
                            gv.extend_from_slice(&g[o * total + offset..o * total + offset + block]);
                        }
                        out.push((*v, gv));
                    }
                    offset += block;
                }
            }
            Op::Reshape(x) => out.push((*x, g.to_vec())),
            Op::Permute { x, perm } => {
                let src = permute_offsets(self.nodes[x.0].value.shape(), perm);
                let mut gx = vec![0.0; g.len()];
                for (o, &s) in src.iter().enumerate() {
                    gx[s] = g[o];
                }
                out.push((*x, gx));
            }
            Op::SumAll(x) => out.push((*x, vec![g[0]; val(*x).len()])),
            Op::MeanAll(x) => {
                let n = val(*x).len().max(1);
                out.push((*x, vec![g[0] / n as f64; n]));
            }
            Op::SumLast(x) => {
                let n = *self.nodes[x.0].value.shape().last().unwrap();
                out.push((*x, g.iter().flat_map(|v| std::iter::repeat_n(*v, n)).collect()));
            }
            Op::AvgPool { x } => {
                let s = self.nodes[x.0].value.shape();
                let os = self.nodes[i].value.shape();
                let (h, w, oh, ow) = (s[2], s[3], os[2], os[3]);
                let mut gx = vec![0.0; numel(s)];
                for plane in 0..s[0] * s[1] {
                    for a in 0..oh {
                        let (r0, r1) = pool_range(a, oh, h);
                        for b in 0..ow {
                            let (c0, c1) = pool_range(b, ow, w);
                            let share = g[plane * oh * ow + a * ow + b] / ((r1 - r0) * (c1 - c0)) as f64;
                            for r in r0..r1 {
                                for c in c0..c1 {
                                    gx[plane * h * w + r * w + c] += share;
                                }
                            }
                        }
                    }
                }
                out.push((*x, gx));
            }
            Op::FourierPe { x } => {
                let dim = *self.nodes[i].value.shape().last().unwrap();
                let xs = val(*x);
                let mut gx = vec![0.0; xs.len()];
                for r in 0..xs.len() / 2 {
                    let (px, py) = (xs[2 * r], xs[2 * r + 1]);
                    let gr = &g[r * dim..(r + 1) * dim];
                    for k in 0..dim / 4 {
                        let f = (k + 1) as f64 * PI;
                        let (sx, cx) = (f * px).sin_cos();
                        let (sy, cy) = (f * py).sin_cos();
                        gx[2 * r] += f * (gr[4 * k] * cx - gr[4 * k + 2] * sx);
                        gx[2 * r + 1] += f * (gr[4 * k + 1] * cy - gr[4 * k + 3] * sy);
                    }
                }
                out.push((*x, gx));
            }
            Op::Chamfer { ctrl, grads } => {
                let gx = grads.iter().zip(g).flat_map(|(row, gv)| row.map(|v| v * gv)).collect();
                out.push((*ctrl, gx));
            }
        }
        out.retain(|(v, _)| self.needs(*v));
        out
    }
}

/// Strides of `op(M)` for a row-major `[rows, cols]` matrix `M`.
fn strides(_rows: usize, cols: usize, transposed: bool) -> (isize, isize) {
    if transposed {
        (1, cols as isize)
    } else {
        (cols as isize, 1)
    }
}

fn pool_range(i: usize, out: usize, len: usize) -> (usize, usize) {
    let start = i * len / out;
    let end = ((i + 1) * len).div_ceil(out);
    (start, end)
}

/// Source offset of every output element of a permutation, in output order.
fn permute_offsets(shape: &[usize], perm: &[usize]) -> Vec<usize> {
    let nd = shape.len();
    let mut in_strides = vec![1usize; nd];
    for d in (0..nd.saturating_sub(1)).rev() {
        in_strides[d] = in_strides[d + 1] * shape[d + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let total = numel(shape);
    let mut res = Vec::with_capacity(total);
    let mut idx = vec![0usize; nd];
    let mut off = 0usize;
    for _ in 0..total {
        res.push(off);
        for d in (0..nd).rev() {
            idx[d] += 1;
            off += src_strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            off -= src_strides[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    res
}

struct ConvGeom {
    b: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn new(sx: &[usize], sw: &[usize], stride: usize, pad: usize) -> Option<Self> {
        let (h, w, kh, kw) = (sx[2] + 2 * pad, sx[3] + 2 * pad, sw[2], sw[3]);
        if kh > h || kw > w || stride == 0 {
            return None;
        }
        Some(Self {
            b: sx[0],
            cin: sx[1],
            h: sx[2],
            w: sx[3],
            cout: sw[0],
            kh,
            kw,
            stride,
            pad,
            ho: (h - kh) / stride + 1,
            wo: (w - kw) / stride + 1,
        })
    }

    fn kdim(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    /// Calls `f(col_row, out_pixel, input_offset)` for every in-bounds tap.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        for c in 0..self.cin {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (c * self.kh + ky) * self.kw + kx;
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        for ox in 0..self.wo {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= self.w as isize {
                                continue;
                            }
                            f(row, oy * self.wo + ox, (c * self.h + iy as usize) * self.w + ix as usize);
                        }
                    }
                }
            }
        }
    }

    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let p = self.ho * self.wo;
        self.for_each_tap(|row, pix, off| cols[row * p + pix] = x[off]);
    }

    fn col2im(&self, cols: &[f64], gx: &mut [f64]) {
        let p = self.ho * self.wo;
        self.for_each_tap(|row, pix, off| gx[off] += cols[row * p + pix]);
    }
}
