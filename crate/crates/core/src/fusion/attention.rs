//! Softmax attention for single query rows and the windowed tape op.
//!
//! Three evaluation routes exist for the same quantity: the streaming
//! (online softmax) recurrence used in the network, a two-pass softmax, and a
//! dense masked computation over all query/key pairs that serves as the
//! reference.

use std::rc::Rc;

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::flops;
use crate::kernels::{self, dot};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Online-softmax accumulation over `n` keys processed `tile` at a time.
/// Only one tile of logits is alive at any moment. Writes `Σ eʲ·vⱼ / Σ eʲ`
/// into `out`.
#[allow(clippy::too_many_arguments)]
fn online_softmax<'a, T: Scalar>(
    query: &[T],
    n: usize,
    key: impl Fn(usize) -> &'a [T],
    value: impl Fn(usize) -> &'a [T],
    tile: usize,
    scale: T,
    logits: &mut Vec<T>,
    out: &mut [T],
) {
    let tile = tile.max(1);
    let mut run_max = T::neg_infinity();
    let mut denom = T::zero();
    out.fill(T::zero());
    let mut start = 0;
    while start < n {
        let end = (start + tile).min(n);
        logits.clear();
        let mut tile_max = T::neg_infinity();
        for j in start..end {
            let s = dot(query, key(j)) * scale;
            tile_max = tile_max.max(s);
            logits.push(s);
        }
        let new_max = run_max.max(tile_max);
        if run_max != T::neg_infinity() && new_max != run_max {
            let corr = (run_max - new_max).exp();
            denom *= corr;
            for o in out.iter_mut() {
                *o *= corr;
            }
        }
        for (j, &s) in (start..end).zip(logits.iter()) {
            let e = (s - new_max).exp();
            denom += e;
            for (o, &v) in out.iter_mut().zip(value(j)) {
                *o += e * v;
            }
        }
        run_max = new_max;
        start = end;
    }
    if n > 0 {
        for o in out.iter_mut() {
            *o /= denom;
        }
    }
}

/// Two-pass softmax: all logits, their max, then the normalised weighted sum.
fn two_pass<'a, T: Scalar>(
    query: &[T],
    n: usize,
    key: impl Fn(usize) -> &'a [T],
    value: impl Fn(usize) -> &'a [T],
    scale: T,
    out: &mut [T],
) {
    out.fill(T::zero());
    if n == 0 {
        return;
    }
    let logits: Vec<T> = (0..n).map(|j| dot(query, key(j)) * scale).collect();
    let mx = logits.iter().fold(T::neg_infinity(), |m, &s| m.max(s));
    let mut denom = T::zero();
    for (j, &s) in logits.iter().enumerate() {
        let e = (s - mx).exp();
        denom += e;
        for (o, &v) in out.iter_mut().zip(value(j)) {
            *o += e * v;
        }
    }
    for o in out.iter_mut() {
        *o /= denom;
    }
}

fn row_count<T: Scalar>(op: &'static str, flat: &[T], width: usize) -> Result<usize> {
    if width == 0 || !flat.len().is_multiple_of(width) {
        return Err(Error::shape(op, &[flat.len()], &[width]));
    }
    Ok(flat.len() / width)
}

/// Softmax attention of one query over `K̂` key/value rows (row-major,
/// `keys: K̂×C`, `values: K̂×C_v`) with logits scaled by `1/√C`, evaluated by
/// the online-softmax recurrence in tiles of `tile` keys.
pub fn streaming_attention_row<T: Scalar>(query: &[T], keys: &[T], values: &[T], tile: usize) -> Result<Vec<T>> {
    let c = query.len();
    let n = row_count("streaming_attention_row", keys, c)?;
    if n == 0 {
        return Ok(vec![T::zero(); c]);
    }
    if !values.len().is_multiple_of(n) {
        return Err(Error::shape("streaming_attention_row", &[n, c], &[values.len()]));
    }
    let cv = values.len() / n;
    let mut out = vec![T::zero(); cv];
    let mut buf = Vec::with_capacity(tile.max(1));
    online_softmax(
        query,
        n,
        |j| &keys[j * c..(j + 1) * c],
        |j| &values[j * cv..(j + 1) * cv],
        tile,
        T::one() / T::of_usize(c).sqrt(),
        &mut buf,
        &mut out,
    );
    Ok(out)
}

/// Two-pass reference for [`streaming_attention_row`].
pub fn two_pass_attention_row<T: Scalar>(query: &[T], keys: &[T], values: &[T]) -> Result<Vec<T>> {
    let c = query.len();
    let n = row_count("two_pass_attention_row", keys, c)?;
    if n == 0 {
        return Ok(vec![T::zero(); c]);
    }
    if !values.len().is_multiple_of(n) {
        return Err(Error::shape("two_pass_attention_row", &[n, c], &[values.len()]));
    }
    let cv = values.len() / n;
    let mut out = vec![T::zero(); cv];
    two_pass(
        query,
        n,
        |j| &keys[j * c..(j + 1) * c],
        |j| &values[j * cv..(j + 1) * cv],
        T::one() / T::of_usize(c).sqrt(),
        &mut out,
    );
    Ok(out)
}

/// How windowed attention rows are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowEval {
    Streaming { tile: usize },
    TwoPass,
}

fn attention_dims<T: Scalar>(q: &Tensor<T>, k: &Tensor<T>, v: &Tensor<T>, rows: usize) -> Result<(usize, usize, usize, usize)> {
    let (m, c) = match *q.shape() {
        [m, c] => (m, c),
        _ => return Err(Error::shape("attention query", q.shape(), &[])),
    };
    let (nk, ck) = match *k.shape() {
        [n, c] => (n, c),
        _ => return Err(Error::shape("attention keys", k.shape(), &[])),
    };
    let (nv, cv) = match *v.shape() {
        [n, c] => (n, c),
        _ => return Err(Error::shape("attention values", v.shape(), &[])),
    };
    if ck != c || nv != nk {
        return Err(Error::shape("attention", k.shape(), v.shape()));
    }
    if rows != m {
        return Err(Error::shape("attention key lists", q.shape(), &[rows]));
    }
    Ok((m, c, nk, cv))
}

/// Attention of each query row `m` over the key/value rows listed in
/// `lists[m]`, without recording anything on a tape. Rows with an empty
/// list produce zeros. Counts `Σₘ |lists[m]|·(C + C_v)` multiply-adds.
pub fn windowed_attention_values<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    lists: &[Vec<usize>],
    eval: RowEval,
) -> Result<Tensor<T>> {
    let (m, c, nk, cv) = attention_dims(q, k, v, lists.len())?;
    if lists.iter().flatten().any(|&j| j >= nk) {
        return Err(Error::shape("attention key index", k.shape(), &[nk]));
    }
    let scale = T::one() / T::of_usize(c).sqrt();
    let (qd, kd, vd) = (q.data(), k.data(), v.data());
    let mut out = vec![T::zero(); m * cv];
    let mut buf = Vec::new();
    let mut pairs = 0usize;
    for (i, list) in lists.iter().enumerate() {
        pairs += list.len();
        let o = &mut out[i * cv..(i + 1) * cv];
        let key = |j: usize| &kd[list[j] * c..(list[j] + 1) * c];
        let val = |j: usize| &vd[list[j] * cv..(list[j] + 1) * cv];
        match eval {
            RowEval::Streaming { tile } => {
                online_softmax(&qd[i * c..(i + 1) * c], list.len(), key, val, tile, scale, &mut buf, o)
            }
            RowEval::TwoPass => two_pass(&qd[i * c..(i + 1) * c], list.len(), key, val, scale, o),
        }
    }
    flops::add((pairs * (c + cv)) as u64);
    Tensor::new([m, cv], out)
}

/// Dense reference: logits for every query/key pair, an additive −∞ mask
/// where `mask[m·K + j]` is false, softmax, and the weighted sum. Rows whose
/// keys are all masked yield zeros. Counts `M·K·(C + C_v)` multiply-adds.
pub fn dense_masked_attention<T: Scalar>(q: &Tensor<T>, k: &Tensor<T>, v: &Tensor<T>, mask: &[bool]) -> Result<Tensor<T>> {
    let m = q.shape().first().copied().unwrap_or(0);
    let (m, c, nk, cv) = attention_dims(q, k, v, m)?;
    if mask.len() != m * nk {
        return Err(Error::shape("dense attention mask", &[m, nk], &[mask.len()]));
    }
    let scale = T::one() / T::of_usize(c).sqrt();
    let mut logits = kernels::matmul_a_bt(q.data(), k.data(), m, c, nk);
    for (l, &keep) in logits.iter_mut().zip(mask) {
        *l = if keep { *l * scale } else { T::neg_infinity() };
    }
    let mut probs = vec![T::zero(); m * nk];
    for i in 0..m {
        let row = &logits[i * nk..(i + 1) * nk];
        let mx = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        if mx == T::neg_infinity() {
            continue;
        }
        let p = &mut probs[i * nk..(i + 1) * nk];
        let mut s = T::zero();
        for (pj, &l) in p.iter_mut().zip(row) {
            *pj = (l - mx).exp();
            s += *pj;
        }
        for pj in p.iter_mut() {
            *pj /= s;
        }
    }
    let out = kernels::matmul(&probs, v.data(), m, nk, cv);
    flops::add((m * nk * (c + cv)) as u64);
    Tensor::new([m, cv], out)
}

/// Differentiable windowed attention. The forward rows are evaluated with
/// `eval`; the adjoint recomputes each row's probabilities.
pub fn windowed_attention<'t, T: Scalar>(
    q: &Var<'t, T>,
    k: &Var<'t, T>,
    v: &Var<'t, T>,
    lists: Rc<Vec<Vec<usize>>>,
    eval: RowEval,
) -> Result<Var<'t, T>> {
    let out = windowed_attention_values(&q.value(), &k.value(), &v.value(), &lists, eval)?;
    Ok(q.tape().push_op(
        out,
        &[*q, *k, *v],
        Box::new(move |g, p, _| {
            let (qv, kv, vv) = (&p[0], &p[1], &p[2]);
            let (c, cv) = (qv.shape()[1], vv.shape()[1]);
            let scale = T::one() / T::of_usize(c).sqrt();
            let (qd, kd, vd, gd) = (qv.data(), kv.data(), vv.data(), g.data());
            let mut gq = vec![T::zero(); qd.len()];
            let mut gk = vec![T::zero(); kd.len()];
            let mut gv = vec![T::zero(); vd.len()];
            let mut probs = Vec::new();
            for (i, list) in lists.iter().enumerate() {
                if list.is_empty() {
                    continue;
                }
                let qi = &qd[i * c..(i + 1) * c];
                let gi = &gd[i * cv..(i + 1) * cv];
                probs.clear();
                probs.extend(list.iter().map(|&j| dot(qi, &kd[j * c..(j + 1) * c]) * scale));
                let mx = probs.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
                let mut s = T::zero();
                for p in probs.iter_mut() {
                    *p = (*p - mx).exp();
                    s += *p;
                }
                for p in probs.iter_mut() {
                    *p /= s;
                }
                // dp_j = g·v_j ;  ds_j = p_j (dp_j − Σ p dp)
                let dps: Vec<T> = list.iter().map(|&j| dot(gi, &vd[j * cv..(j + 1) * cv])).collect();
                let mean: T = probs.iter().zip(&dps).map(|(&p, &d)| p * d).sum();
                for ((&j, &p), &dp) in list.iter().zip(&probs).zip(&dps) {
                    for (a, &gg) in gv[j * cv..(j + 1) * cv].iter_mut().zip(gi) {
                        *a += p * gg;
                    }
                    let ds = p * (dp - mean) * scale;
                    let kj = &kd[j * c..(j + 1) * c];
                    for (a, &kk) in gq[i * c..(i + 1) * c].iter_mut().zip(kj) {
                        *a += ds * kk;
                    }
                    for (a, &qq) in gk[j * c..(j + 1) * c].iter_mut().zip(qi) {
                        *a += ds * qq;
                    }
                }
            }
            vec![
                Some(Tensor::new(qv.shape().to_vec(), gq).unwrap()),
                Some(Tensor::new(kv.shape().to_vec(), gk).unwrap()),
                Some(Tensor::new(vv.shape().to_vec(), gv).unwrap()),
            ]
        }),
    ))
}
