//! Slice-level numeric kernels shared by the differentiable ops and the
//! non-differentiable evaluation paths. None of these touch the FLOP counter.
//!
//! Every output element of the matrix products is accumulated in ascending
//! order of the contracted index, independently of the other output rows, so
//! a row's result does not depend on which other rows are computed with it.

use crate::scalar::Scalar;

/// `a[m×k] · b[k×n]`.
pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a[m×k] · b[n×k]ᵀ`.
pub fn matmul_a_bt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] = dot(arow, brow);
        }
    }
    out
}

/// `a[m×k]ᵀ · b[m×n]`, giving `k×n`.
pub fn matmul_at_b<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); k * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// Geometry of a 2-D cross-correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvGeom {
    /// Output extents, or `None` when they would be non-positive.
    pub fn new(c_in: usize, h: usize, w: usize, kh: usize, kw: usize, stride: usize, pad: usize) -> Option<Self> {
        if stride == 0 || h + 2 * pad < kh || w + 2 * pad < kw {
            return None;
        }
        let h_out = (h + 2 * pad - kh) / stride + 1;
        let w_out = (w + 2 * pad - kw) / stride + 1;
        Some(Self {
            c_in,
            h,
            w,
            kh,
            kw,
            stride,
            pad,
            h_out,
            w_out,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    pub fn out_len(&self) -> usize {
        self.h_out * self.w_out
    }
}

/// Unfolds `input[c×h×w]` into columns `[c·kh·kw, h_out·w_out]`.
pub fn im2col<T: Scalar>(input: &[T], g: &ConvGeom) -> Vec<T> {
    let p = g.out_len();
    let mut cols = vec![T::zero(); g.patch_len() * p];
    for c in 0..g.c_in {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let r = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[r * p..(r + 1) * p];
                for oy in 0..g.h_out {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = &input[(c * g.h + iy as usize) * g.w..(c * g.h + iy as usize + 1) * g.w];
                    for ox in 0..g.w_out {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[oy * g.w_out + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: folds columns back, summing overlaps.
pub fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom) -> Vec<T> {
    let p = g.out_len();
    let mut out = vec![T::zero(); g.c_in * g.h * g.w];
    for c in 0..g.c_in {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let r = (c * g.kh + ky) * g.kw + kx;
                let src = &cols[r * p..(r + 1) * p];
                for oy in 0..g.h_out {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let base = (c * g.h + iy as usize) * g.w;
                    for ox in 0..g.w_out {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            out[base + ix as usize] += src[oy * g.w_out + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Source taps for one output coordinate of a 2× bilinear upsampling with
/// half-pixel centers (edge-clamped): `(i0, i1, w1)` with weight `1 − w1` on
/// `i0` and `w1` on `i1`.
pub fn bilinear_taps(o: usize, n_in: usize) -> (usize, usize, f64) {
    let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
    let i0 = (src.floor() as usize).min(n_in - 1);
    let i1 = (i0 + 1).min(n_in - 1);
    let w1 = src - i0 as f64;
    (i0, i1, w1)
}
