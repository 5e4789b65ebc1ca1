//! Forward and vector-Jacobian kernels shared by [`Graph`](super::Graph) and
//! [`Eager`](super::Eager).
//!
//! Backward kernels accumulate into caller-provided gradient buffers so that
//! broadcast reductions and fan-out fall out of plain `+=`.

use alloc::vec;
use alloc::vec::Vec;

use super::{broadcast_shape, broadcast_strides, broadcast_zip, Tensor};
use crate::math;
use crate::{Error, Result};

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    binary("add", a, b, |x, y| x + y)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    binary("mul", a, b, |x, y| x * y)
}

fn binary(op: &'static str, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::new(a.shape(), data);
    }
    let out = broadcast_shape(op, a.shape(), b.shape())?;
    let sa = broadcast_strides(a.shape(), &out);
    let sb = broadcast_strides(b.shape(), &out);
    let mut data = vec![0.0; out.iter().product()];
    let (da, db) = (a.data(), b.data());
    broadcast_zip(&out, &sa, &sb, |o, ia, ib| data[o] = f(da[ia], db[ib]));
    Tensor::new(out, data)
}

/// Accumulates the gradient of `a + b` into `ga` / `gb`.
pub fn add_backward(
    a: &[usize],
    b: &[usize],
    gout: &Tensor,
    ga: Option<&mut [f64]>,
    gb: Option<&mut [f64]>,
) {
    let out = gout.shape();
    let g = gout.data();
    if let Some(ga) = ga {
        reduce_into(a, out, g, ga);
    }
    if let Some(gb) = gb {
        reduce_into(b, out, g, gb);
    }
}

fn reduce_into(shape: &[usize], out: &[usize], g: &[f64], acc: &mut [f64]) {
    if shape == out {
        acc.iter_mut().zip(g).for_each(|(a, &v)| *a += v);
        return;
    }
    let s = broadcast_strides(shape, out);
    let zero = vec![0; out.len()];
    broadcast_zip(out, &s, &zero, |o, i, _| acc[i] += g[o]);
}

/// Accumulates the gradient of `a * b` into `ga` / `gb`.
pub fn mul_backward(
    a: &Tensor,
    b: &Tensor,
    gout: &Tensor,
    ga: Option<&mut [f64]>,
    gb: Option<&mut [f64]>,
) {
    let out = gout.shape();
    let g = gout.data();
    let (da, db) = (a.data(), b.data());
    if a.shape() == b.shape() {
        if let Some(ga) = ga {
            for ((acc, &gv), &y) in ga.iter_mut().zip(g).zip(db) {
                *acc += gv * y;
            }
        }
        if let Some(gb) = gb {
            for ((acc, &gv), &x) in gb.iter_mut().zip(g).zip(da) {
                *acc += gv * x;
            }
        }
        return;
    }
    let sa = broadcast_strides(a.shape(), out);
    let sb = broadcast_strides(b.shape(), out);
    if let Some(ga) = ga {
        broadcast_zip(out, &sa, &sb, |o, ia, ib| ga[ia] += g[o] * db[ib]);
    }
    if let Some(gb) = gb {
        broadcast_zip(out, &sa, &sb, |o, ia, ib| gb[ib] += g[o] * da[ia]);
    }
}

pub fn relu_in_place(x: &mut Tensor) {
    for v in x.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// `out` is the forward result; the gradient passes where it is positive.
pub fn relu_backward(out: &Tensor, gout: &Tensor, ga: &mut [f64]) {
    for ((acc, &g), &y) in ga.iter_mut().zip(gout.data()).zip(out.data()) {
        if y > 0.0 {
            *acc += g;
        }
    }
}

struct MatmulDims {
    out_shape: Vec<usize>,
    batch: Vec<usize>,
    stride_a: Vec<usize>,
    stride_b: Vec<usize>,
    p: usize,
    q: usize,
    r: usize,
}

fn matmul_dims(a: &[usize], b: &[usize]) -> Result<MatmulDims> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::dim("matmul", a, b));
    }
    let (p, q) = (a[a.len() - 2], a[a.len() - 1]);
    let (q2, r) = (b[b.len() - 2], b[b.len() - 1]);
    if q != q2 {
        return Err(Error::dim("matmul", a, b));
    }
    if b.len() == 2 {
        // A plain weight matrix: fold every leading axis of `a` into the rows.
        let rows = a[..a.len() - 1].iter().product();
        let mut out_shape = a[..a.len() - 1].to_vec();
        out_shape.push(r);
        return Ok(MatmulDims {
            out_shape,
            batch: Vec::new(),
            stride_a: Vec::new(),
            stride_b: Vec::new(),
            p: rows,
            q,
            r,
        });
    }
    let ba = &a[..a.len() - 2];
    let bb = &b[..b.len() - 2];
    let batch = broadcast_shape("matmul", ba, bb).map_err(|_| Error::dim("matmul", a, b))?;
    let stride_a = broadcast_strides(ba, &batch);
    let stride_b = broadcast_strides(bb, &batch);
    let mut out_shape = batch.clone();
    out_shape.extend([p, r]);
    Ok(MatmulDims {
        out_shape,
        batch,
        stride_a,
        stride_b,
        p,
        q,
        r,
    })
}

/// Batched matrix product `[..., p, q] x [..., q, r]` with broadcast batch axes.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let d = matmul_dims(a.shape(), b.shape())?;
    let (p, q, r) = (d.p, d.q, d.r);
    let mut out = vec![0.0; d.out_shape.iter().product()];
    if q == 0 || r == 0 {
        return Tensor::new(d.out_shape, out);
    }
    let (da, db) = (a.data(), b.data());
    broadcast_zip(&d.batch, &d.stride_a, &d.stride_b, |o, ia, ib| {
        let am = &da[ia * p * q..(ia + 1) * p * q];
        let bm = &db[ib * q * r..(ib + 1) * q * r];
        let cm = &mut out[o * p * r..(o + 1) * p * r];
        for (arow, crow) in am.chunks_exact(q).zip(cm.chunks_exact_mut(r)) {
            for (&av, brow) in arow.iter().zip(bm.chunks_exact(r)) {
                // Masked inputs leave many exact zeros.
                if av != 0.0 {
                    for (c, &bv) in crow.iter_mut().zip(brow) {
                        *c += av * bv;
                    }
                }
            }
        }
    });
    Tensor::new(d.out_shape, out)
}

pub fn matmul_backward(
    a: &Tensor,
    b: &Tensor,
    gout: &Tensor,
    mut ga: Option<&mut [f64]>,
    mut gb: Option<&mut [f64]>,
) {
    let Ok(d) = matmul_dims(a.shape(), b.shape()) else {
        return;
    };
    let (p, q, r) = (d.p, d.q, d.r);
    if q == 0 || r == 0 {
        return;
    }
    let (da, db, g) = (a.data(), b.data(), gout.data());
    broadcast_zip(&d.batch, &d.stride_a, &d.stride_b, |o, ia, ib| {
        let am = &da[ia * p * q..(ia + 1) * p * q];
        let bm = &db[ib * q * r..(ib + 1) * q * r];
        let gm = &g[o * p * r..(o + 1) * p * r];
        if let Some(ga) = ga.as_deref_mut() {
            let gam = &mut ga[ia * p * q..(ia + 1) * p * q];
            for (grow, garow) in gm.chunks_exact(r).zip(gam.chunks_exact_mut(q)) {
                for (acc, brow) in garow.iter_mut().zip(bm.chunks_exact(r)) {
                    *acc += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                }
            }
        }
        if let Some(gb) = gb.as_deref_mut() {
            let gbm = &mut gb[ib * q * r..(ib + 1) * q * r];
            for (arow, grow) in am.chunks_exact(q).zip(gm.chunks_exact(r)) {
                for (&av, gbrow) in arow.iter().zip(gbm.chunks_exact_mut(r)) {
                    if av != 0.0 {
                        for (acc, &gv) in gbrow.iter_mut().zip(grow) {
                            *acc += av * gv;
                        }
                    }
                }
            }
        }
    });
}

/// Maximum along `axis` (the axis is removed). Ties resolve to the lowest index.
pub fn max_pool_axis(x: &Tensor, axis: usize) -> Result<(Tensor, Vec<usize>)> {
    let shape = x.shape();
    if axis >= shape.len() || shape[axis] == 0 {
        return Err(Error::dim("max_pool_axis", shape, &[axis]));
    }
    let outer: usize = shape[..axis].iter().product();
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let data = x.data();
    let mut out = vec![0.0; outer * inner];
    let mut arg = vec![0usize; outer * inner];
    for o in 0..outer {
        let dst = &mut out[o * inner..(o + 1) * inner];
        let idx = &mut arg[o * inner..(o + 1) * inner];
        dst.copy_from_slice(&data[o * n * inner..o * n * inner + inner]);
        for j in 1..n {
            let src = &data[(o * n + j) * inner..(o * n + j + 1) * inner];
            for i in 0..inner {
                if src[i] > dst[i] {
                    dst[i] = src[i];
                    idx[i] = j;
                }
            }
        }
    }
    let mut out_shape = shape.to_vec();
    out_shape.remove(axis);
    Ok((Tensor::new(out_shape, out)?, arg))
}

pub fn max_pool_backward(in_shape: &[usize], axis: usize, argmax: &[usize], gout: &Tensor, ga: &mut [f64]) {
    let n = in_shape[axis];
    let inner: usize = in_shape[axis + 1..].iter().product();
    for (pos, (&j, &g)) in argmax.iter().zip(gout.data()).enumerate() {
        let (o, i) = (pos / inner, pos % inner);
        ga[(o * n + j) * inner + i] += g;
    }
}

/// Swaps the last two axes.
pub fn transpose_last2(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    if s.len() < 2 {
        return Err(Error::dim("transpose", s, &[]));
    }
    let (p, q) = (s[s.len() - 2], s[s.len() - 1]);
    let batch = x.len() / (p * q).max(1);
    let mut out = vec![0.0; x.len()];
    let d = x.data();
    for b in 0..batch {
        let src = &d[b * p * q..(b + 1) * p * q];
        let dst = &mut out[b * p * q..(b + 1) * p * q];
        for i in 0..p {
            for j in 0..q {
                dst[j * p + i] = src[i * q + j];
            }
        }
    }
    let mut shape = s.to_vec();
    let n = shape.len();
    shape.swap(n - 2, n - 1);
    Tensor::new(shape, out)
}

pub fn transpose_backward(in_shape: &[usize], gout: &Tensor, ga: &mut [f64]) {
    let n = in_shape.len();
    let (p, q) = (in_shape[n - 2], in_shape[n - 1]);
    let batch = ga.len() / (p * q).max(1);
    let g = gout.data();
    for b in 0..batch {
        for i in 0..p {
            for j in 0..q {
                ga[b * p * q + i * q + j] += g[b * p * q + j * p + i];
            }
        }
    }
}

/// Concatenation along the last axis; leading extents must agree.
pub fn concat_last(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.is_empty() || sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
        return Err(Error::dim("concat", sa, sb));
    }
    let (ca, cb) = (sa[sa.len() - 1], sb[sb.len() - 1]);
    let rows: usize = sa[..sa.len() - 1].iter().product();
    let mut out = Vec::with_capacity(rows * (ca + cb));
    for r in 0..rows {
        out.extend_from_slice(&a.data()[r * ca..(r + 1) * ca]);
        out.extend_from_slice(&b.data()[r * cb..(r + 1) * cb]);
    }
    let mut shape = sa.to_vec();
    *shape.last_mut().unwrap() = ca + cb;
    Tensor::new(shape, out)
}

pub fn concat_backward(ca: usize, cb: usize, gout: &Tensor, ga: Option<&mut [f64]>, gb: Option<&mut [f64]>) {
    let g = gout.data();
    let rows = g.len() / (ca + cb).max(1);
    if let Some(ga) = ga {
        for r in 0..rows {
            for c in 0..ca {
                ga[r * ca + c] += g[r * (ca + cb) + c];
            }
        }
    }
    if let Some(gb) = gb {
        for r in 0..rows {
            for c in 0..cb {
                gb[r * cb + c] += g[r * (ca + cb) + ca + c];
            }
        }
    }
}

pub fn sum(x: &Tensor) -> Tensor {
    Tensor::scalar(x.data().iter().sum())
}

/// A fixed sparse linear map between row sets: output row `i` is
/// `sum_j weight[j] * input[src[j]]` over the entries of row `i`.
///
/// Used for unfolding (weight 1, missing slots contribute nothing) and for
/// inverse-distance scattering. Weights are constants, not parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct RowMix {
    inputs: usize,
    offsets: Vec<usize>,
    src: Vec<usize>,
    weight: Vec<f64>,
}

impl RowMix {
    pub fn new(inputs: usize) -> Self {
        Self {
            inputs,
            offsets: vec![0],
            src: Vec::new(),
            weight: Vec::new(),
        }
    }

    /// One output row per entry; `None` produces a zero row.
    pub fn gather(inputs: usize, index: &[Option<usize>]) -> Self {
        let mut mix = Self::new(inputs);
        for ix in index {
            mix.push_row(ix.map(|i| (i, 1.0)));
        }
        mix
    }

    pub fn push_row(&mut self, entries: impl IntoIterator<Item = (usize, f64)>) {
        for (s, w) in entries {
            debug_assert!(s < self.inputs);
            self.src.push(s);
            self.weight.push(w);
        }
        self.offsets.push(self.src.len());
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
        self.src[lo..hi].iter().copied().zip(self.weight[lo..hi].iter().copied())
    }

    /// `x` is `[inputs, ...]`; the result is `[outputs, ...]`.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let s = x.shape();
        if s.is_empty() || s[0] != self.inputs {
            return Err(Error::dim("row_mix", s, &[self.inputs]));
        }
        let c: usize = s[1..].iter().product();
        let d = x.data();
        let mut out = vec![0.0; self.outputs() * c];
        for i in 0..self.outputs() {
            let dst = &mut out[i * c..(i + 1) * c];
            for (src, w) in self.row(i) {
                let row = &d[src * c..(src + 1) * c];
                if w == 1.0 {
                    dst.iter_mut().zip(row).for_each(|(o, &v)| *o += v);
                } else {
                    dst.iter_mut().zip(row).for_each(|(o, &v)| *o += w * v);
                }
            }
        }
        let mut shape = s.to_vec();
        shape[0] = self.outputs();
        Tensor::new(shape, out)
    }

    pub fn backward(&self, gout: &Tensor, ga: &mut [f64]) {
        let c = gout.len() / self.outputs().max(1);
        let g = gout.data();
        for i in 0..self.outputs() {
            let grow = &g[i * c..(i + 1) * c];
            for (src, w) in self.row(i) {
                ga[src * c..(src + 1) * c]
                    .iter_mut()
                    .zip(grow)
                    .for_each(|(a, &v)| *a += w * v);
            }
        }
    }
}

/// Cached softmax state for the cross-entropy backward pass.
#[derive(Clone, Debug)]
pub struct CrossEntropyCache {
    pub probs: Vec<f64>,
    pub targets: Vec<usize>,
    pub ignore: usize,
    pub count: usize,
}

/// Mean negative log-softmax over rows whose target is not `ignore`.
///
/// `logits` is `[..., C]`; `targets` has one entry per leading position.
/// With every row ignored the loss is 0 and the gradient vanishes.
pub fn softmax_cross_entropy(
    logits: &Tensor,
    targets: &[usize],
    ignore: usize,
) -> Result<(Tensor, CrossEntropyCache)> {
    let s = logits.shape();
    if s.is_empty() {
        return Err(Error::dim("cross_entropy", s, &[targets.len()]));
    }
    let c = s[s.len() - 1];
    let rows = logits.len() / c.max(1);
    if rows != targets.len() || c == 0 {
        return Err(Error::dim("cross_entropy", s, &[targets.len()]));
    }
    let d = logits.data();
    let mut probs = vec![0.0; d.len()];
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..rows {
        let t = targets[r];
        if t == ignore {
            continue;
        }
        if t >= c {
            return Err(Error::usage(alloc::format!("target class {t} outside [0, {c})")));
        }
        let row = &d[r * c..(r + 1) * c];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let p = &mut probs[r * c..(r + 1) * c];
        let mut z = 0.0;
        for (pv, &v) in p.iter_mut().zip(row) {
            *pv = math::exp(v - m);
            z += *pv;
        }
        p.iter_mut().for_each(|v| *v /= z);
        total += m + math::ln(z) - row[t];
        count += 1;
    }
    let loss = if count == 0 { 0.0 } else { total / count as f64 };
    Ok((
        Tensor::scalar(loss),
        CrossEntropyCache {
            probs,
            targets: targets.to_vec(),
            ignore,
            count,
        },
    ))
}

pub fn cross_entropy_backward(cache: &CrossEntropyCache, gout: f64, ga: &mut [f64]) {
    if cache.count == 0 {
        return;
    }
    let c = ga.len() / cache.targets.len().max(1);
    let scale = gout / cache.count as f64;
    for (r, &t) in cache.targets.iter().enumerate() {
        if t == cache.ignore {
            continue;
        }
        for j in 0..c {
            let onehot = if j == t { 1.0 } else { 0.0 };
            ga[r * c + j] += scale * (cache.probs[r * c + j] - onehot);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let id = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let col = t(&[2, 1], &[3.0, 4.0]);
        assert_eq!(matmul(&id, &col).unwrap(), col);
        let row = t(&[1, 2], &[1.0, 2.0]);
        assert_eq!(matmul(&row, &col).unwrap().data(), &[11.0]);

        let a = Tensor::ones([1, 2, 3]);
        let b = Tensor::ones([5, 3, 4]);
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), &[5, 2, 4]);
        assert!(c.data().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = matmul(&Tensor::ones([2, 3]), &Tensor::ones([2, 3])).unwrap_err();
        assert_eq!(err, Error::dim("matmul", &[2, 3], &[2, 3]));
        assert!(matmul(&Tensor::ones([2, 2, 3]), &Tensor::ones([3, 3, 1])).is_err());
    }

    #[test]
    fn mul_examples() {
        let x = t(&[3], &[1.5, -2.0, 7.0]);
        assert_eq!(mul(&x, &Tensor::ones([3])).unwrap(), x);
        assert_eq!(mul(&t(&[2], &[2.0, 3.0]), &t(&[2], &[0.0, 1.0])).unwrap().data(), &[0.0, 3.0]);
        let big = Tensor::ones([4, 9, 16]);
        let small = Tensor::ones([1, 9, 16]);
        assert_eq!(mul(&big, &small).unwrap().shape(), &[4, 9, 16]);
        assert!(mul(&Tensor::ones([4, 2]), &Tensor::ones([3])).is_err());
    }

    #[test]
    fn max_pool_examples() {
        let (v, arg) = max_pool_axis(&t(&[1, 3], &[1.0, 5.0, 3.0]), 1).unwrap();
        assert_eq!(v.data(), &[5.0]);
        assert_eq!(arg, vec![1]);
        let (v, arg) = max_pool_axis(&t(&[1, 3], &[2.0, 2.0, 2.0]), 1).unwrap();
        assert_eq!((v.data()[0], arg[0]), (2.0, 0));
        assert!(max_pool_axis(&Tensor::zeros([2, 0]), 1).is_err());
        assert!(max_pool_axis(&Tensor::zeros([2]), 1).is_err());
    }

    #[test]
    fn max_pool_middle_axis() {
        // [2, 3, 2]: pool over the 3 axis
        let x = Tensor::from_fn([2, 3, 2], |i| [0., 9., 4., 1., 2., 3., 5., 5., 8., 0., 1., 7.][i]);
        let (v, arg) = max_pool_axis(&x, 1).unwrap();
        assert_eq!(v.shape(), &[2, 2]);
        assert_eq!(v.data(), &[4.0, 9.0, 8.0, 7.0]);
        assert_eq!(arg, vec![1, 0, 1, 2]);
    }

    #[test]
    fn transpose_and_concat() {
        let x = Tensor::from_fn([2, 3], |i| i as f64);
        let y = transpose_last2(&x).unwrap();
        assert_eq!(y.shape(), &[3, 2]);
        assert_eq!(y.data(), &[0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
        let c = concat_last(&x, &Tensor::ones([2, 1])).unwrap();
        assert_eq!(c.data(), &[0.0, 1.0, 2.0, 1.0, 3.0, 4.0, 5.0, 1.0]);
        assert!(concat_last(&x, &Tensor::ones([3, 1])).is_err());
    }

    #[test]
    fn row_mix_gathers_and_weights() {
        let x = Tensor::from_fn([3, 2], |i| i as f64);
        let g = RowMix::gather(3, &[Some(2), None, Some(0)]);
        assert_eq!(g.apply(&x).unwrap().data(), &[4.0, 5.0, 0.0, 0.0, 0.0, 1.0]);
        let mut m = RowMix::new(3);
        m.push_row([(0, 0.5), (1, 0.5)]);
        assert_eq!(m.apply(&x).unwrap().data(), &[1.0, 2.0]);
        assert!(m.apply(&Tensor::zeros([2, 2])).is_err());
    }

    #[test]
    fn cross_entropy_uniform_and_limits() {
        let (l, _) = softmax_cross_entropy(&Tensor::zeros([2, 4]), &[1, 3], 99).unwrap();
        assert!((l.item().unwrap() - math::ln(4.0)).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for mag in [1.0, 5.0, 20.0, 100.0] {
            let (l, _) = softmax_cross_entropy(&t(&[1, 3], &[0.0, mag, 0.0]), &[1], 99).unwrap();
            let l = l.item().unwrap();
            assert!(l < prev);
            prev = l;
        }
        assert!(prev < 1e-40);
        let (l, cache) = softmax_cross_entropy(&Tensor::ones([2, 3]), &[7, 7], 7).unwrap();
        assert_eq!(l.item(), Some(0.0));
        let mut g = vec![0.0; 6];
        cross_entropy_backward(&cache, 1.0, &mut g);
        assert!(g.iter().all(|&v| v == 0.0));
        assert!(softmax_cross_entropy(&Tensor::ones([1, 3]), &[3], 9).is_err());
    }
}
