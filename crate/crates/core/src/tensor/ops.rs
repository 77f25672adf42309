//! Forward kernels and their adjoints.
//!
//! Every function here is pure. The tape in `tape.rs` stores what the
//! adjoints need and calls the `*_backward` functions in reverse order.
//! Convolution is cross-correlation (no kernel flip).

use crate::error::{Error, Result};
use crate::par;

use super::{Shape, Tensor};

/// `c = a·b + beta·c` for row-major-with-strides operands.
///
/// `a` is `m×k` with strides `(rsa, csa)`, `b` is `k×n`, `c` is `m×n` row-major.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    // SAFETY: the asserts above bound every element the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(x: Shape, kh: usize, kw: usize, stride: usize, pad: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidArgument("stride must be positive".into()));
        }
        let eh = x.h + 2 * pad;
        let ew = x.w + 2 * pad;
        if eh < kh || ew < kw {
            return Err(Error::shape(
                "conv2d",
                format!("kernel {kh}x{kw} larger than padded input {eh}x{ew}"),
            ));
        }
        Ok(ConvGeom {
            c: x.c,
            h: x.h,
            w: x.w,
            kh,
            kw,
            stride,
            pad,
            ho: (eh - kh) / stride + 1,
            wo: (ew - kw) / stride + 1,
        })
    }

    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

fn im2col(x: &[f64], g: &ConvGeom, out: &mut [f64]) {
    let cols = g.cols();
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut out[row * cols..(row + 1) * cols];
                for oi in 0..g.ho {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    let drow = &mut dst[oi * g.wo..(oi + 1) * g.wo];
                    if ii < 0 || ii >= g.h as isize {
                        drow.fill(0.0);
                        continue;
                    }
                    let src = &plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                    for (oj, d) in drow.iter_mut().enumerate() {
                        let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                        *d = if jj < 0 || jj >= g.w as isize { 0.0 } else { src[jj as usize] };
                    }
                }
            }
        }
    }
}

fn col2im(cols_buf: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let cols = g.cols();
    for c in 0..g.c {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols_buf[row * cols..(row + 1) * cols];
                for oi in 0..g.ho {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    if ii < 0 || ii >= g.h as isize {
                        continue;
                    }
                    let prow = &mut plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                    for oj in 0..g.wo {
                        let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                        if jj >= 0 && jj < g.w as isize {
                            prow[jj as usize] += src[oi * g.wo + oj];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_check(x: Shape, w: Shape, b: Option<Shape>, stride: usize, pad: usize) -> Result<ConvGeom> {
    if w.c != x.c {
        return Err(Error::shape(
            "conv2d",
            format!("input has {} channels but kernel expects {} (kernel {})", x.c, w.c, w),
        ));
    }
    if w.h % 2 == 0 || w.w % 2 == 0 {
        return Err(Error::InvalidArgument(format!("conv2d kernel extents must be odd, got {}x{}", w.h, w.w)));
    }
    if let Some(b) = b {
        if b.numel() != w.n {
            return Err(Error::shape("conv2d", format!("bias has {} values for {} kernels", b.numel(), w.n)));
        }
    }
    ConvGeom::new(x, w.h, w.w, stride, pad)
}

/// Cross-correlation of `x` (N×C×H×W) with `w` (K×C×kH×kW) plus per-kernel bias.
pub fn conv2d(x: &Tensor, w: &Tensor, b: Option<&Tensor>, stride: usize, pad: usize) -> Result<Tensor> {
    let g = conv2d_check(x.shape(), w.shape(), b.map(|b| b.shape()), stride, pad)?;
    let xs = x.shape();
    let k = w.shape().n;
    let (rows, cols) = (g.rows(), g.cols());
    let out_shape = Shape::new(xs.n, k, g.ho, g.wo);
    let mut out = vec![0.0; out_shape.numel()];
    let xd = x.data();
    let wd = w.data();
    let chw = xs.chw();
    par::for_each_chunk_mut(&mut out, k * cols, |n, o| {
        let xn = &xd[n * chw..(n + 1) * chw];
        if g.is_pointwise() {
            gemm(k, rows, cols, wd, (rows, 1), xn, (cols, 1), 0.0, o);
        } else {
            let mut buf = vec![0.0; rows * cols];
            im2col(xn, &g, &mut buf);
            gemm(k, rows, cols, wd, (rows, 1), &buf, (cols, 1), 0.0, o);
        }
        if let Some(b) = b {
            for (kk, chunk) in o.chunks_mut(cols).enumerate() {
                let bv = b.data()[kk];
                chunk.iter_mut().for_each(|v| *v += bv);
            }
        }
    });
    super::check_finite("conv2d", &out)?;
    Ok(Tensor::from_parts(out_shape, out))
}

pub(crate) struct ConvGrads {
    pub dx: Option<Vec<f64>>,
    pub dw: Option<Vec<f64>>,
    pub db: Option<Vec<f64>>,
}

pub(crate) fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    stride: usize,
    pad: usize,
    dy: &[f64],
    need: (bool, bool, bool),
) -> ConvGrads {
    let xs = x.shape();
    let ws = w.shape();
    let g = ConvGeom::new(xs, ws.h, ws.w, stride, pad).expect("validated in forward");
    let k = ws.n;
    let (rows, cols) = (g.rows(), g.cols());
    let chw = xs.chw();
    let xd = x.data();
    let wd = w.data();

    let db = need.2.then(|| {
        let mut db = vec![0.0; k];
        for n in 0..xs.n {
            for kk in 0..k {
                let off = (n * k + kk) * cols;
                db[kk] += dy[off..off + cols].iter().sum::<f64>();
            }
        }
        db
    });

    let dw = need.1.then(|| {
        let partials = par::map_range(xs.n, |n| {
            let dyn_ = &dy[n * k * cols..(n + 1) * k * cols];
            let xn = &xd[n * chw..(n + 1) * chw];
            let mut part = vec![0.0; k * rows];
            if g.is_pointwise() {
                gemm(k, cols, rows, dyn_, (cols, 1), xn, (1, cols), 0.0, &mut part);
            } else {
                let mut buf = vec![0.0; rows * cols];
                im2col(xn, &g, &mut buf);
                gemm(k, cols, rows, dyn_, (cols, 1), &buf, (1, cols), 0.0, &mut part);
            }
            part
        });
        let mut dw = vec![0.0; k * rows];
        for part in partials {
            dw.iter_mut().zip(&part).for_each(|(a, b)| *a += b);
        }
        dw
    });

    let dx = need.0.then(|| {
        let mut dx = vec![0.0; xs.numel()];
        par::for_each_chunk_mut(&mut dx, chw, |n, dxn| {
            let dyn_ = &dy[n * k * cols..(n + 1) * k * cols];
            if g.is_pointwise() {
                gemm(rows, k, cols, wd, (1, rows), dyn_, (cols, 1), 0.0, dxn);
            } else {
                let mut buf = vec![0.0; rows * cols];
                gemm(rows, k, cols, wd, (1, rows), dyn_, (cols, 1), 0.0, &mut buf);
                col2im(&buf, &g, dxn);
            }
        });
        dx
    });

    ConvGrads { dx, dw, db }
}

/// Per-channel statistics over (N, H, W).
pub(crate) fn channel_mean_var(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let s = x.shape();
    let m = (s.n * s.plane()) as f64;
    let mut mean = vec![0.0; s.c];
    let mut var = vec![0.0; s.c];
    let d = x.data();
    for c in 0..s.c {
        let mut acc = 0.0;
        for n in 0..s.n {
            let off = (n * s.c + c) * s.plane();
            acc += d[off..off + s.plane()].iter().sum::<f64>();
        }
        mean[c] = acc / m;
        let mut acc = 0.0;
        for n in 0..s.n {
            let off = (n * s.c + c) * s.plane();
            acc += d[off..off + s.plane()].iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>();
        }
        var[c] = acc / m;
    }
    (mean, var)
}

/// `y = gamma·(x − mean)/sqrt(var + eps) + beta` per channel; also returns the
/// normalized values.
pub(crate) fn channel_affine_normalize(
    x: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    mean: &[f64],
    var: &[f64],
    eps: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let s = x.shape();
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut y = vec![0.0; s.numel()];
    let mut xhat = vec![0.0; s.numel()];
    let d = x.data();
    for n in 0..s.n {
        for c in 0..s.c {
            let off = (n * s.c + c) * s.plane();
            for i in off..off + s.plane() {
                let h = (d[i] - mean[c]) * inv_std[c];
                xhat[i] = h;
                y[i] = gamma[c] * h + beta[c];
            }
        }
    }
    (y, xhat, inv_std)
}

pub(crate) fn batchnorm_train_backward(
    s: Shape,
    xhat: &[f64],
    inv_std: &[f64],
    gamma: &[f64],
    dy: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let m = (s.n * s.plane()) as f64;
    let mut dgamma = vec![0.0; s.c];
    let mut dbeta = vec![0.0; s.c];
    for n in 0..s.n {
        for c in 0..s.c {
            let off = (n * s.c + c) * s.plane();
            for i in off..off + s.plane() {
                dgamma[c] += dy[i] * xhat[i];
                dbeta[c] += dy[i];
            }
        }
    }
    let mut dx = vec![0.0; s.numel()];
    for n in 0..s.n {
        for c in 0..s.c {
            let off = (n * s.c + c) * s.plane();
            let k = gamma[c] * inv_std[c] / m;
            for i in off..off + s.plane() {
                dx[i] = k * (m * dy[i] - dbeta[c] - xhat[i] * dgamma[c]);
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// Source taps for half-pixel bilinear resampling along one axis.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Tap {
    pub i0: usize,
    pub i1: usize,
    pub frac: f64,
}

pub(crate) fn bilinear_taps(input: usize, output: usize) -> Vec<Tap> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            Tap { i0, i1, frac: src - i0 as f64 }
        })
        .collect()
}

pub fn upsample_bilinear(x: &Tensor, factor: usize) -> Result<Tensor> {
    if !matches!(factor, 2 | 4 | 8) {
        return Err(Error::InvalidArgument(format!("upsample factor must be 2, 4 or 8, got {factor}")));
    }
    let s = x.shape();
    resize_bilinear(x, s.h * factor, s.w * factor)
}

/// Half-pixel bilinear resize of every plane to `oh×ow`.
pub fn resize_bilinear(x: &Tensor, oh: usize, ow: usize) -> Result<Tensor> {
    let s = x.shape();
    if s.h == 0 || s.w == 0 || oh == 0 || ow == 0 {
        return Err(Error::shape("resize", format!("{} -> {}x{}", s, oh, ow)));
    }
    let ty = bilinear_taps(s.h, oh);
    let tx = bilinear_taps(s.w, ow);
    let out_shape = Shape::new(s.n, s.c, oh, ow);
    let mut out = vec![0.0; out_shape.numel()];
    let d = x.data();
    par::for_each_chunk_mut(&mut out, oh * ow, |p, o| {
        let src = &d[p * s.plane()..(p + 1) * s.plane()];
        for (oi, y) in ty.iter().enumerate() {
            let r0 = &src[y.i0 * s.w..(y.i0 + 1) * s.w];
            let r1 = &src[y.i1 * s.w..(y.i1 + 1) * s.w];
            for (oj, t) in tx.iter().enumerate() {
                let top = r0[t.i0] * (1.0 - t.frac) + r0[t.i1] * t.frac;
                let bot = r1[t.i0] * (1.0 - t.frac) + r1[t.i1] * t.frac;
                o[oi * ow + oj] = top * (1.0 - y.frac) + bot * y.frac;
            }
        }
    });
    Ok(Tensor::from_parts(out_shape, out))
}

pub(crate) fn resize_bilinear_backward(input: Shape, oh: usize, ow: usize, dy: &[f64]) -> Vec<f64> {
    let ty = bilinear_taps(input.h, oh);
    let tx = bilinear_taps(input.w, ow);
    let mut dx = vec![0.0; input.numel()];
    let plane = input.plane();
    par::for_each_chunk_mut(&mut dx, plane, |p, dxp| {
        let g = &dy[p * oh * ow..(p + 1) * oh * ow];
        for (oi, y) in ty.iter().enumerate() {
            for (oj, t) in tx.iter().enumerate() {
                let v = g[oi * ow + oj];
                dxp[y.i0 * input.w + t.i0] += v * (1.0 - y.frac) * (1.0 - t.frac);
                dxp[y.i0 * input.w + t.i1] += v * (1.0 - y.frac) * t.frac;
                dxp[y.i1 * input.w + t.i0] += v * y.frac * (1.0 - t.frac);
                dxp[y.i1 * input.w + t.i1] += v * y.frac * t.frac;
            }
        }
    });
    dx
}

/// Max pooling; returns the output and, per output element, the flat in-plane
/// index of the winner (first in row-major order on ties).
pub fn maxpool2d(x: &Tensor, k: usize, stride: usize, pad: usize) -> Result<(Tensor, Vec<usize>)> {
    if k == 0 || pad >= k {
        return Err(Error::InvalidArgument(format!("maxpool k={k} pad={pad}")));
    }
    let s = x.shape();
    let g = ConvGeom::new(s, k, k, stride, pad)?;
    let out_shape = Shape::new(s.n, s.c, g.ho, g.wo);
    let mut out = vec![0.0; out_shape.numel()];
    let mut arg = vec![0usize; out_shape.numel()];
    let d = x.data();
    for p in 0..s.n * s.c {
        let src = &d[p * s.plane()..(p + 1) * s.plane()];
        for oi in 0..g.ho {
            for oj in 0..g.wo {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = usize::MAX;
                for ki in 0..k {
                    let ii = (oi * stride + ki) as isize - pad as isize;
                    if ii < 0 || ii >= s.h as isize {
                        continue;
                    }
                    for kj in 0..k {
                        let jj = (oj * stride + kj) as isize - pad as isize;
                        if jj < 0 || jj >= s.w as isize {
                            continue;
                        }
                        let idx = ii as usize * s.w + jj as usize;
                        if src[idx] > best || best_i == usize::MAX {
                            best = src[idx];
                            best_i = idx;
                        } else if src[idx] == best && idx < best_i {
                            best_i = idx;
                        }
                    }
                }
                let o = p * g.ho * g.wo + oi * g.wo + oj;
                out[o] = best;
                arg[o] = best_i;
            }
        }
    }
    Ok((Tensor::from_parts(out_shape, out), arg))
}

pub fn global_avgpool(x: &Tensor) -> Tensor {
    let s = x.shape();
    let d = x.data();
    let out = (0..s.n * s.c)
        .map(|p| d[p * s.plane()..(p + 1) * s.plane()].iter().sum::<f64>() / s.plane() as f64)
        .collect();
    Tensor::from_parts(Shape::new(s.n, s.c, 1, 1), out)
}

/// Batched matrix product over the leading `N·C` planes: (P×Q)·(Q×R).
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.n != sb.n || sa.c != sb.c || sa.w != sb.h {
        return Err(Error::shape("matmul", format!("{} · {}", sa, sb)));
    }
    let (p, q, r) = (sa.h, sa.w, sb.w);
    let out_shape = Shape::new(sa.n, sa.c, p, r);
    let mut out = vec![0.0; out_shape.numel()];
    let (ad, bd) = (a.data(), b.data());
    par::for_each_chunk_mut(&mut out, (p * r).max(1), |i, o| {
        gemm(p, q, r, &ad[i * p * q..], (q, 1), &bd[i * q * r..], (r, 1), 0.0, o);
    });
    super::check_finite("matmul", &out)?;
    Ok(Tensor::from_parts(out_shape, out))
}

pub(crate) fn matmul_backward(a: &Tensor, b: &Tensor, dy: &[f64], need: (bool, bool)) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let (sa, sb) = (a.shape(), b.shape());
    let (p, q, r) = (sa.h, sa.w, sb.w);
    let (ad, bd) = (a.data(), b.data());
    let da = need.0.then(|| {
        let mut da = vec![0.0; sa.numel()];
        par::for_each_chunk_mut(&mut da, (p * q).max(1), |i, o| {
            // dA = dY · Bᵀ
            gemm(p, r, q, &dy[i * p * r..], (r, 1), &bd[i * q * r..], (1, r), 0.0, o);
        });
        da
    });
    let db = need.1.then(|| {
        let mut db = vec![0.0; sb.numel()];
        par::for_each_chunk_mut(&mut db, (q * r).max(1), |i, o| {
            // dB = Aᵀ · dY
            gemm(q, p, r, &ad[i * p * q..], (1, q), &dy[i * p * r..], (r, 1), 0.0, o);
        });
        db
    });
    (da, db)
}

/// Row-wise softmax over the last axis, stabilized by subtracting the row max.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let s = x.shape();
    let mut out = x.to_vec();
    if s.w > 0 {
        for row in out.chunks_mut(s.w) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                z += *v;
            }
            row.iter_mut().for_each(|v| *v /= z);
        }
    }
    Tensor::from_parts(s, out)
}

pub(crate) fn softmax_rows_backward(y: &Tensor, dy: &[f64]) -> Vec<f64> {
    let w = y.shape().w;
    let mut dx = vec![0.0; dy.len()];
    for ((yr, gr), dr) in y.data().chunks(w).zip(dy.chunks(w)).zip(dx.chunks_mut(w)) {
        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for i in 0..w {
            dr[i] = yr[i] * (gr[i] - dot);
        }
    }
    dx
}

pub fn transpose_last(x: &Tensor) -> Tensor {
    let s = x.shape();
    let out_shape = Shape::new(s.n, s.c, s.w, s.h);
    let mut out = vec![0.0; s.numel()];
    let d = x.data();
    for p in 0..s.n * s.c {
        let base = p * s.plane();
        for i in 0..s.h {
            for j in 0..s.w {
                out[base + j * s.h + i] = d[base + i * s.w + j];
            }
        }
    }
    Tensor::from_parts(out_shape, out)
}

pub fn concat_channels(xs: &[&Tensor]) -> Result<Tensor> {
    let first = xs
        .first()
        .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?
        .shape();
    for t in xs {
        let s = t.shape();
        if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
            return Err(Error::shape("concat_channels", format!("{} vs {}", s, first)));
        }
    }
    let c_total: usize = xs.iter().map(|t| t.shape().c).sum();
    let out_shape = Shape::new(first.n, c_total, first.h, first.w);
    let mut out = Vec::with_capacity(out_shape.numel());
    for n in 0..first.n {
        for t in xs {
            let chw = t.shape().chw();
            out.extend_from_slice(&t.data()[n * chw..(n + 1) * chw]);
        }
    }
    Ok(Tensor::from_parts(out_shape, out))
}

pub fn slice_channels(x: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let s = x.shape();
    if start + len > s.c || len == 0 {
        return Err(Error::shape("slice_channels", format!("[{start}, {}) of {}", start + len, s)));
    }
    let out_shape = Shape::new(s.n, len, s.h, s.w);
    let mut out = Vec::with_capacity(out_shape.numel());
    for n in 0..s.n {
        let off = (n * s.c + start) * s.plane();
        out.extend_from_slice(&x.data()[off..off + len * s.plane()]);
    }
    Ok(Tensor::from_parts(out_shape, out))
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Soft Dice loss `1 − (2Σpg + ε)/(Σp² + Σg² + ε)`.
pub fn dice_loss(pred: &[f64], gt: &[f64], eps: f64) -> f64 {
    let (i, s) = dice_terms(pred, gt);
    1.0 - (2.0 * i + eps) / (s + eps)
}

pub(crate) fn dice_terms(pred: &[f64], gt: &[f64]) -> (f64, f64) {
    let mut inter = 0.0;
    let mut sq = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        inter += p * g;
        sq += p * p + g * g;
    }
    (inter, sq)
}

pub(crate) fn dice_backward(pred: &[f64], gt: &[f64], eps: f64, dl: f64) -> Vec<f64> {
    let (i, s) = dice_terms(pred, gt);
    let num = 2.0 * i + eps;
    let den = s + eps;
    pred.iter()
        .zip(gt)
        .map(|(p, g)| -dl * (2.0 * g * den - num * 2.0 * p) / (den * den))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Shape, v: &[f64]) -> Tensor {
        Tensor::new(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn conv_all_ones_kernel_on_2x2() {
        let x = t(Shape::new(1, 1, 2, 2), &[1.0, 2.0, 3.0, 4.0]);
        let w = Tensor::full(Shape::new(1, 1, 3, 3), 1.0);
        let y = conv2d(&x, &w, None, 1, 1).unwrap();
        assert_eq!(y.data(), &[10.0, 10.0, 10.0, 10.0]);
    }

    #[test]
    fn conv_identity_and_bias_on_zero_input() {
        let x = Tensor::from_fn(Shape::new(2, 1, 3, 4), |n, _, h, w| (n * 12 + h * 4 + w) as f64).unwrap();
        let w = Tensor::full(Shape::new(1, 1, 1, 1), 1.0);
        assert_eq!(conv2d(&x, &w, None, 1, 0).unwrap(), x);

        let z = Tensor::zeros(Shape::new(1, 2, 3, 3));
        let w = Tensor::full(Shape::new(2, 2, 3, 3), 0.7);
        let b = t(Shape::new(2, 1, 1, 1), &[1.5, -2.0]);
        let y = conv2d(&z, &w, Some(&b), 1, 1).unwrap();
        assert!(y.data()[..9].iter().all(|&v| v == 1.5));
        assert!(y.data()[9..].iter().all(|&v| v == -2.0));
    }

    #[test]
    fn conv_rejects_channel_mismatch_and_even_kernel() {
        let x = Tensor::zeros(Shape::new(1, 3, 4, 4));
        let w = Tensor::zeros(Shape::new(1, 2, 3, 3));
        let err = conv2d(&x, &w, None, 1, 1).unwrap_err().to_string();
        assert!(err.contains("3 channels"), "{err}");
        let w = Tensor::zeros(Shape::new(1, 3, 2, 2));
        assert!(conv2d(&x, &w, None, 1, 0).is_err());
    }

    #[test]
    fn conv_strided_extent() {
        let x = Tensor::zeros(Shape::new(1, 1, 9, 8));
        let w = Tensor::zeros(Shape::new(4, 1, 7, 7));
        let y = conv2d(&x, &w, None, 2, 3).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 4, 5, 4));
    }

    #[test]
    fn upsample_half_pixel_convention() {
        let x = t(Shape::new(1, 1, 1, 2), &[0.0, 1.0]);
        let y = upsample_bilinear(&x, 2).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 2, 4));
        assert_eq!(&y.data()[..4], &[0.0, 0.25, 0.75, 1.0]);
        let c = Tensor::full(Shape::new(1, 2, 3, 3), 4.5);
        let y = upsample_bilinear(&c, 8).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 2, 24, 24));
        assert!(y.data().iter().all(|&v| (v - 4.5).abs() < 1e-12));
        assert!(upsample_bilinear(&c, 3).is_err());
    }

    #[test]
    fn pooling_examples() {
        let x = t(Shape::new(1, 1, 2, 2), &[1.0, 2.0, 3.0, 4.0]);
        let (y, arg) = maxpool2d(&x, 2, 2, 0).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(arg, vec![3]);
        assert_eq!(global_avgpool(&x).data(), &[2.5]);
        let ties = Tensor::full(Shape::new(1, 1, 3, 3), 1.0);
        let (_, arg) = maxpool2d(&ties, 3, 2, 1).unwrap();
        assert_eq!(arg, vec![0, 1, 3, 4]);
    }

    #[test]
    fn softmax_closed_form() {
        let x = t(Shape::new(1, 1, 1, 2), &[0.0, 3f64.ln()]);
        let y = softmax_rows(&x);
        assert!((y.data()[0] - 0.25).abs() < 1e-15);
        assert!((y.data()[1] - 0.75).abs() < 1e-15);
        let u = softmax_rows(&Tensor::full(Shape::new(1, 1, 2, 5), 3.0));
        assert!(u.data().iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn matmul_identity() {
        let a = Tensor::from_fn(Shape::new(2, 1, 3, 3), |n, _, i, j| (n * 9 + i * 3 + j) as f64).unwrap();
        let eye = Tensor::from_fn(Shape::new(2, 1, 3, 3), |_, _, i, j| if i == j { 1.0 } else { 0.0 }).unwrap();
        assert_eq!(matmul(&a, &eye).unwrap(), a);
        assert_eq!(matmul(&eye, &a).unwrap(), a);
        assert!(matmul(&a, &Tensor::zeros(Shape::new(2, 1, 2, 3))).is_err());
    }

    #[test]
    fn concat_then_slice_roundtrip() {
        let a = Tensor::from_fn(Shape::new(2, 2, 2, 2), |n, c, h, w| (n * 8 + c * 4 + h * 2 + w) as f64).unwrap();
        let b = Tensor::from_fn(Shape::new(2, 3, 2, 2), |n, c, h, w| -((n * 12 + c * 4 + h * 2 + w) as f64)).unwrap();
        let cat = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.shape().c, 5);
        assert_eq!(slice_channels(&cat, 0, 2).unwrap(), a);
        assert_eq!(slice_channels(&cat, 2, 3).unwrap(), b);
    }

    #[test]
    fn dice_examples() {
        let g: Vec<f64> = (0..400).map(|i| if i < 100 { 1.0 } else { 0.0 }).collect();
        assert_eq!(dice_loss(&g, &g, 1.0), 0.0);
        let p: Vec<f64> = (0..400).map(|i| if (200..300).contains(&i) { 1.0 } else { 0.0 }).collect();
        assert!((dice_loss(&p, &g, 1.0) - (1.0 - 1.0 / 201.0)).abs() < 1e-15);
        let z = vec![0.0; 16];
        assert_eq!(dice_loss(&z, &z, 1.0), 0.0);
    }
}
