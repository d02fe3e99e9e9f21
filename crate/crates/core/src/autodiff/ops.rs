//! Differentiable primitives. Each op computes its value eagerly, records an
//! adjoint on the tape, and counts its multiply-adds.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::flops;
use crate::kernels::{self, ConvGeom};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::tape::Var;

fn same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}

fn dims2<T: Scalar>(op: &'static str, t: &Tensor<T>) -> Result<(usize, usize)> {
    match *t.shape() {
        [r, c] => Ok((r, c)),
        _ => Err(Error::shape(op, t.shape(), &[])),
    }
}

fn dims3<T: Scalar>(op: &'static str, t: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::shape(op, t.shape(), &[])),
    }
}

fn tensor<T: Scalar>(shape: &[usize], data: Vec<T>) -> Tensor<T> {
    Tensor::new(shape.to_vec(), data).expect("op produced consistent shape")
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn add(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        let (a, b) = (self.value(), other.value());
        same_shape("add", &a, &b)?;
        let out = a.zip_map(&b, |x, y| x + y)?;
        Ok(self.tape.push_op(
            out,
            &[*self, *other],
            Box::new(|g, _, _| vec![Some(g.clone()), Some(g.clone())]),
        ))
    }

    pub fn sub(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        let (a, b) = (self.value(), other.value());
        same_shape("sub", &a, &b)?;
        let out = a.zip_map(&b, |x, y| x - y)?;
        Ok(self.tape.push_op(
            out,
            &[*self, *other],
            Box::new(|g, _, _| vec![Some(g.clone()), Some(g.map(|v| -v))]),
        ))
    }

    /// Element-wise product.
    pub fn mul(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        let (a, b) = (self.value(), other.value());
        same_shape("mul", &a, &b)?;
        let out = a.zip_map(&b, |x, y| x * y)?;
        flops::add(out.numel() as u64);
        Ok(self.tape.push_op(
            out,
            &[*self, *other],
            Box::new(|g, p, _| {
                vec![
                    Some(g.zip_map(&p[1], |g, b| g * b).unwrap()),
                    Some(g.zip_map(&p[0], |g, a| g * a).unwrap()),
                ]
            }),
        ))
    }

    pub fn scale(&self, c: T) -> Var<'t, T> {
        let out = self.value().map(|v| v * c);
        self.tape
            .push_op(out, &[*self], Box::new(move |g, _, _| vec![Some(g.map(|v| v * c))]))
    }

    pub fn relu(&self) -> Var<'t, T> {
        let out = self.value().map(|v| if v > T::zero() { v } else { T::zero() });
        self.tape.push_op(
            out,
            &[*self],
            Box::new(|g, p, _| {
                vec![Some(
                    g.zip_map(&p[0], |g, x| if x > T::zero() { g } else { T::zero() }).unwrap(),
                )]
            }),
        )
    }

    /// `ln(1 + eˣ)`, evaluated without overflow.
    pub fn softplus(&self) -> Var<'t, T> {
        let out = self.value().map(softplus);
        self.tape.push_op(
            out,
            &[*self],
            Box::new(|g, p, _| vec![Some(g.zip_map(&p[0], |g, x| g * sigmoid(x)).unwrap())]),
        )
    }

    /// 2-D matrix product.
    pub fn matmul(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        let (a, b) = (self.value(), other.value());
        let (m, k) = dims2("matmul", &a)?;
        let (k2, n) = dims2("matmul", &b)?;
        if k != k2 {
            return Err(Error::shape("matmul", a.shape(), b.shape()));
        }
        let out = kernels::matmul(a.data(), b.data(), m, k, n);
        flops::add((m * n * k) as u64);
        Ok(self.tape.push_op(
            tensor(&[m, n], out),
            &[*self, *other],
            Box::new(move |g, p, _| {
                let ga = kernels::matmul_a_bt(g.data(), p[1].data(), m, n, k);
                let gb = kernels::matmul_at_b(p[0].data(), g.data(), m, k, n);
                vec![Some(tensor(&[m, k], ga)), Some(tensor(&[k, n], gb))]
            }),
        ))
    }

    /// Adds `bias[n]` to every row of `self[m×n]`.
    pub fn add_row_bias(&self, bias: &Var<'t, T>) -> Result<Var<'t, T>> {
        let (x, b) = (self.value(), bias.value());
        let (m, n) = dims2("add_row_bias", &x)?;
        if b.shape() != [n] {
            return Err(Error::shape("add_row_bias", x.shape(), b.shape()));
        }
        let mut out = x.data().to_vec();
        for row in out.chunks_mut(n) {
            for (o, &bv) in row.iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
        Ok(self.tape.push_op(
            tensor(&[m, n], out),
            &[*self, *bias],
            Box::new(move |g, _, _| {
                let mut gb = vec![T::zero(); n];
                for row in g.data().chunks(n) {
                    for (a, &v) in gb.iter_mut().zip(row) {
                        *a += v;
                    }
                }
                vec![Some(g.clone()), Some(tensor(&[n], gb))]
            }),
        ))
    }

    /// Affine layer `self[m×in] · w[in×out] + b[out]`.
    pub fn linear(&self, w: &Var<'t, T>, b: Option<&Var<'t, T>>) -> Result<Var<'t, T>> {
        let y = self.matmul(w)?;
        match b {
            Some(b) => y.add_row_bias(b),
            None => Ok(y),
        }
    }

    pub fn transpose(&self) -> Result<Var<'t, T>> {
        let x = self.value();
        let (m, n) = dims2("transpose", &x)?;
        let out = transpose_data(x.data(), m, n);
        Ok(self.tape.push_op(
            tensor(&[n, m], out),
            &[*self],
            Box::new(move |g, _, _| vec![Some(tensor(&[m, n], transpose_data(g.data(), n, m)))]),
        ))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t, T>> {
        let x = self.value();
        let old = x.shape().to_vec();
        let out = (*x).clone().reshape(shape.to_vec())?;
        Ok(self.tape.push_op(
            out,
            &[*self],
            Box::new(move |g, _, _| vec![Some(g.clone().reshape(old.clone()).unwrap())]),
        ))
    }

    /// Softmax along `axis`, stabilized by subtracting each slice's maximum.
    pub fn softmax(&self, axis: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        if axis >= x.ndim() || x.shape()[axis] == 0 {
            return Err(Error::shape("softmax", x.shape(), &[axis]));
        }
        let (outer, n, inner) = split_axis(x.shape(), axis);
        let mut out = x.data().to_vec();
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * n + j) * inner + i;
                let mut mx = T::neg_infinity();
                for j in 0..n {
                    mx = mx.max(out[idx(j)]);
                }
                let mut s = T::zero();
                for j in 0..n {
                    let e = (out[idx(j)] - mx).exp();
                    out[idx(j)] = e;
                    s += e;
                }
                for j in 0..n {
                    out[idx(j)] /= s;
                }
            }
        }
        let shape = x.shape().to_vec();
        Ok(self.tape.push_op(
            tensor(&shape, out),
            &[*self],
            Box::new(move |g, _, y| {
                let (g, y) = (g.data(), y.data());
                let mut gx = vec![T::zero(); y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * n + j) * inner + i;
                        let mut dotp = T::zero();
                        for j in 0..n {
                            dotp += g[idx(j)] * y[idx(j)];
                        }
                        for j in 0..n {
                            gx[idx(j)] = y[idx(j)] * (g[idx(j)] - dotp);
                        }
                    }
                }
                vec![Some(tensor(&shape, gx))]
            }),
        ))
    }

    /// Cross-correlation of `self[c_in×h×w]` with `weight[c_out×c_in×kh×kw]`.
    pub fn conv2d(&self, weight: &Var<'t, T>, bias: Option<&Var<'t, T>>, stride: usize, pad: usize) -> Result<Var<'t, T>> {
        let (x, w) = (self.value(), weight.value());
        let (c_in, h, wd) = dims3("conv2d", &x)?;
        let (c_out, kh, kw) = match *w.shape() {
            [co, ci, kh, kw] if ci == c_in => (co, kh, kw),
            _ => return Err(Error::shape("conv2d", x.shape(), w.shape())),
        };
        let g = ConvGeom::new(c_in, h, wd, kh, kw, stride, pad).ok_or_else(|| {
            Error::Config(format!(
                "conv2d: kernel {kh}x{kw} stride {stride} pad {pad} gives no output for {h}x{wd} input"
            ))
        })?;
        if let Some(b) = bias {
            if b.value().shape() != [c_out] {
                return Err(Error::shape("conv2d bias", w.shape(), b.value().shape()));
            }
        }
        let cols = kernels::im2col(x.data(), &g);
        let (r, p) = (g.patch_len(), g.out_len());
        let mut out = kernels::matmul(w.data(), &cols, c_out, r, p);
        flops::add((c_out * r * p) as u64);
        if let Some(b) = bias {
            let b = b.value();
            for (row, &bv) in out.chunks_mut(p).zip(b.data()) {
                for o in row {
                    *o += bv;
                }
            }
        }
        let out = tensor(&[c_out, g.h_out, g.w_out], out);
        let cols = Rc::new(cols);
        let bw: super::tape::Backward<T> = Box::new(move |gy, prm, _| {
            let gy = gy.data();
            let gw = kernels::matmul_a_bt(gy, &cols, c_out, p, r);
            let gcols = kernels::matmul_at_b(prm[1].data(), gy, c_out, r, p);
            let gx = kernels::col2im(&gcols, &g);
            let mut grads = vec![
                Some(tensor(&[c_in, g.h, g.w], gx)),
                Some(tensor(&[c_out, c_in, kh, kw], gw)),
            ];
            if prm.len() == 3 {
                let gb: Vec<T> = gy.chunks(p).map(|row| row.iter().copied().sum()).collect();
                grads.push(Some(tensor(&[c_out], gb)));
            }
            grads
        });
        Ok(match bias {
            Some(b) => self.tape.push_op(out, &[*self, *weight, *b], bw),
            None => self.tape.push_op(out, &[*self, *weight], bw),
        })
    }

    /// Max pooling over `k×k` windows of `self[c×h×w]` (no padding). Ties
    /// route the gradient to the first maximal element in scan order.
    pub fn maxpool2d(&self, k: usize, stride: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        let (c, h, w) = dims3("maxpool2d", &x)?;
        let g = ConvGeom::new(c, h, w, k, k, stride, 0)
            .ok_or_else(|| Error::Config(format!("maxpool2d: window {k} stride {stride} on {h}x{w}")))?;
        let (ho, wo) = (g.h_out, g.w_out);
        let mut out = Vec::with_capacity(c * ho * wo);
        let mut arg = Vec::with_capacity(c * ho * wo);
        let xd = x.data();
        for ch in 0..c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = T::neg_infinity();
                    let mut bi = 0;
                    for ky in 0..k {
                        for kx in 0..k {
                            let i = (ch * h + oy * stride + ky) * w + ox * stride + kx;
                            if xd[i] > best || (ky == 0 && kx == 0) {
                                best = xd[i];
                                bi = i;
                            }
                        }
                    }
                    out.push(best);
                    arg.push(bi);
                }
            }
        }
        let n_in = x.numel();
        Ok(self.tape.push_op(
            tensor(&[c, ho, wo], out),
            &[*self],
            Box::new(move |gy, _, _| {
                let mut gx = vec![T::zero(); n_in];
                for (&i, &gv) in arg.iter().zip(gy.data()) {
                    gx[i] += gv;
                }
                vec![Some(tensor(&[c, h, w], gx))]
            }),
        ))
    }

    /// Max over consecutive groups of `group` rows: `[n·group × d] → [n × d]`.
    pub fn segment_max(&self, group: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        let (rows, d) = dims2("segment_max", &x)?;
        if group == 0 || rows % group != 0 {
            return Err(Error::shape("segment_max", x.shape(), &[group]));
        }
        let n = rows / group;
        let xd = x.data();
        let mut out = vec![T::zero(); n * d];
        let mut arg = vec![0usize; n * d];
        for s in 0..n {
            for j in 0..d {
                let mut bi = s * group * d + j;
                for r in 1..group {
                    let i = (s * group + r) * d + j;
                    if xd[i] > xd[bi] {
                        bi = i;
                    }
                }
                out[s * d + j] = xd[bi];
                arg[s * d + j] = bi;
            }
        }
        Ok(self.tape.push_op(
            tensor(&[n, d], out),
            &[*self],
            Box::new(move |gy, _, _| {
                let mut gx = vec![T::zero(); rows * d];
                for (&i, &gv) in arg.iter().zip(gy.data()) {
                    gx[i] += gv;
                }
                vec![Some(tensor(&[rows, d], gx))]
            }),
        ))
    }

    /// Bilinear 2× upsampling of `self[c×h×w]` with half-pixel centers.
    pub fn upsample2x(&self) -> Result<Var<'t, T>> {
        let x = self.value();
        let (c, h, w) = dims3("upsample2x", &x)?;
        let (ho, wo) = (2 * h, 2 * w);
        let ty: Vec<_> = (0..ho).map(|o| kernels::bilinear_taps(o, h)).collect();
        let tx: Vec<_> = (0..wo).map(|o| kernels::bilinear_taps(o, w)).collect();
        let xd = x.data();
        let mut out = vec![T::zero(); c * ho * wo];
        for ch in 0..c {
            let plane = &xd[ch * h * w..(ch + 1) * h * w];
            for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
                let wy = T::of(wy);
                for (ox, &(x0, x1, wx)) in tx.iter().enumerate() {
                    let wx = T::of(wx);
                    let top = plane[y0 * w + x0] * (T::one() - wx) + plane[y0 * w + x1] * wx;
                    let bot = plane[y1 * w + x0] * (T::one() - wx) + plane[y1 * w + x1] * wx;
                    out[(ch * ho + oy) * wo + ox] = top * (T::one() - wy) + bot * wy;
                }
            }
        }
        flops::add((4 * c * ho * wo) as u64);
        Ok(self.tape.push_op(
            tensor(&[c, ho, wo], out),
            &[*self],
            Box::new(move |gy, _, _| {
                let gd = gy.data();
                let mut gx = vec![T::zero(); c * h * w];
                for ch in 0..c {
                    let plane = &mut gx[ch * h * w..(ch + 1) * h * w];
                    for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
                        let wy = T::of(wy);
                        for (ox, &(x0, x1, wx)) in tx.iter().enumerate() {
                            let wx = T::of(wx);
                            let gv = gd[(ch * ho + oy) * wo + ox];
                            let gt = gv * (T::one() - wy);
                            let gb = gv * wy;
                            plane[y0 * w + x0] += gt * (T::one() - wx);
                            plane[y0 * w + x1] += gt * wx;
                            plane[y1 * w + x0] += gb * (T::one() - wx);
                            plane[y1 * w + x1] += gb * wx;
                        }
                    }
                }
                vec![Some(tensor(&[c, h, w], gx))]
            }),
        ))
    }

    /// Rows `idx` of `self[n×d]`, in the given order.
    pub fn gather_rows(&self, idx: &[usize]) -> Result<Var<'t, T>> {
        let x = self.value();
        let (n, d) = dims2("gather_rows", &x)?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::shape("gather_rows", x.shape(), &[bad]));
        }
        let mut out = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            out.extend_from_slice(x.row(i));
        }
        let idx = idx.to_vec();
        let m = idx.len();
        Ok(self.tape.push_op(
            tensor(&[m, d], out),
            &[*self],
            Box::new(move |gy, _, _| {
                let mut gx = vec![T::zero(); n * d];
                for (r, &i) in idx.iter().enumerate() {
                    for j in 0..d {
                        gx[i * d + j] += gy.data()[r * d + j];
                    }
                }
                vec![Some(tensor(&[n, d], gx))]
            }),
        ))
    }

    /// `self` with `src` row `r` added onto row `idx[r]`; rows not named in
    /// `idx` are copied through unchanged.
    pub fn scatter_add_rows(&self, src: &Var<'t, T>, idx: &[usize]) -> Result<Var<'t, T>> {
        let (x, s) = (self.value(), src.value());
        let (n, d) = dims2("scatter_add_rows", &x)?;
        let (m, d2) = dims2("scatter_add_rows", &s)?;
        if d != d2 || m != idx.len() || idx.iter().any(|&i| i >= n) {
            return Err(Error::shape("scatter_add_rows", x.shape(), s.shape()));
        }
        let mut out = x.data().to_vec();
        for (r, &i) in idx.iter().enumerate() {
            for j in 0..d {
                out[i * d + j] += s.data()[r * d + j];
            }
        }
        let idx = idx.to_vec();
        Ok(self.tape.push_op(
            tensor(&[n, d], out),
            &[*self, *src],
            Box::new(move |gy, _, _| {
                let mut gs = Vec::with_capacity(m * d);
                for &i in &idx {
                    gs.extend_from_slice(&gy.data()[i * d..(i + 1) * d]);
                }
                vec![Some(gy.clone()), Some(tensor(&[m, d], gs))]
            }),
        ))
    }

    pub fn sum(&self) -> Var<'t, T> {
        let x = self.value();
        let shape = x.shape().to_vec();
        self.tape.push_op(
            Tensor::scalar(x.sum()),
            &[*self],
            Box::new(move |g, _, _| vec![Some(Tensor::full(shape.clone(), g.item()))]),
        )
    }

    pub fn mean(&self) -> Var<'t, T> {
        let n = T::of_usize(self.value().numel());
        self.sum().scale(T::one() / n)
    }

    /// `(1/|Ω|)·Σ_Ω |self − target|` over the pixels where `mask` is true.
    /// The subgradient at an exact tie is 0.
    pub fn masked_abs_mean(&self, target: &Tensor<T>, mask: &[bool]) -> Result<Var<'t, T>> {
        let x = self.value();
        same_shape("masked_abs_mean", &x, target)?;
        if mask.len() != x.numel() {
            return Err(Error::shape("masked_abs_mean", x.shape(), &[mask.len()]));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::Data("masked_abs_mean: empty mask".into()));
        }
        let inv = T::one() / T::of_usize(count);
        let mut s = T::zero();
        for ((&a, &b), &m) in x.data().iter().zip(target.data()).zip(mask) {
            if m {
                s += (a - b).abs();
            }
        }
        let sign: Vec<T> = x
            .data()
            .iter()
            .zip(target.data())
            .zip(mask)
            .map(|((&a, &b), &m)| if m { (a - b).signum_or_zero() * inv } else { T::zero() })
            .collect();
        let shape = x.shape().to_vec();
        Ok(self.tape.push_op(
            Tensor::scalar(s * inv),
            &[*self],
            Box::new(move |g, _, _| {
                let gv = g.item();
                vec![Some(tensor(&shape, sign.iter().map(|&s| s * gv).collect()))]
            }),
        ))
    }
}

/// Concatenation along `axis`; all other extents must agree.
pub fn concat<'t, T: Scalar>(parts: &[Var<'t, T>], axis: usize) -> Result<Var<'t, T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Config("concat of zero tensors".into()))?;
    let vals: Vec<Rc<Tensor<T>>> = parts.iter().map(|p| p.value()).collect();
    let base = vals[0].shape().to_vec();
    if axis >= base.len() {
        return Err(Error::shape("concat", &base, &[axis]));
    }
    for v in &vals[1..] {
        let s = v.shape();
        if s.len() != base.len() || s.iter().zip(&base).enumerate().any(|(i, (a, b))| i != axis && a != b) {
            return Err(Error::shape("concat", &base, s));
        }
    }
    let outer: usize = base[..axis].iter().product();
    let inner: usize = base[axis + 1..].iter().product();
    let chunks: Vec<usize> = vals.iter().map(|v| v.shape()[axis] * inner).collect();
    let total: usize = chunks.iter().sum();
    let mut out = Vec::with_capacity(outer * total);
    for o in 0..outer {
        for (v, &c) in vals.iter().zip(&chunks) {
            out.extend_from_slice(&v.data()[o * c..(o + 1) * c]);
        }
    }
    let mut shape = base.clone();
    shape[axis] = total / inner.max(1);
    let shapes: Vec<Vec<usize>> = vals.iter().map(|v| v.shape().to_vec()).collect();
    Ok(first.tape.push_op(
        tensor(&shape, out),
        parts,
        Box::new(move |g, _, _| {
            let mut grads: Vec<Vec<T>> = chunks.iter().map(|&c| Vec::with_capacity(c * outer)).collect();
            let gd = g.data();
            let mut off = 0;
            for _ in 0..outer {
                for (gp, &c) in grads.iter_mut().zip(&chunks) {
                    gp.extend_from_slice(&gd[off..off + c]);
                    off += c;
                }
            }
            grads
                .into_iter()
                .zip(&shapes)
                .map(|(d, s)| Some(tensor(s, d)))
                .collect()
        }),
    ))
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn transpose_data<T: Scalar>(x: &[T], m: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = x[i * n + j];
        }
    }
    out
}

pub(crate) fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

trait SignumOrZero {
    fn signum_or_zero(self) -> Self;
}

impl<T: Scalar> SignumOrZero for T {
    fn signum_or_zero(self) -> Self {
        if self > T::zero() {
            T::one()
        } else if self < T::zero() {
            -T::one()
        } else {
            T::zero()
        }
    }
}
