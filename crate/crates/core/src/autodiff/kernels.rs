//! Raw loops behind the tensor ops. No graph bookkeeping here.

#![allow(clippy::too_many_arguments)]

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// Output positions `l` in `0..lo` for which `l * stride + k - pad` lands
/// inside `0..len`.
#[inline]
fn valid_range(lo: usize, len: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    // need l*stride + k >= pad and l*stride + k - pad < len
    let start = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    let end = if len + pad > k {
        ((len + pad - k - 1) / stride + 1).min(lo)
    } else {
        0
    };
    (start, end.max(start))
}

/// Column matrix `[ci * k, lo]` of `x[ci, l]` for one batch element:
/// `cols[(i, kk), o] = x[i, o * stride + kk - pad]`, zero outside.
fn im2col(x: &[f64], ci: usize, l: usize, k: usize, stride: usize, pad: usize, lo: usize, cols: &mut [f64]) {
    cols.fill(0.0);
    for i in 0..ci {
        let xr = &x[i * l..(i + 1) * l];
        for kk in 0..k {
            let row = &mut cols[(i * k + kk) * lo..(i * k + kk + 1) * lo];
            let (s, e) = valid_range(lo, l, kk, stride, pad);
            for (o, c) in row.iter_mut().enumerate().take(e).skip(s) {
                *c = xr[o * stride + kk - pad];
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters `cols[(c, kk), o]` back onto `out[c, l]`.
fn col2im(cols: &[f64], c: usize, l: usize, k: usize, stride: usize, pad: usize, lo: usize, out: &mut [f64]) {
    for ci in 0..c {
        let yr = &mut out[ci * l..(ci + 1) * l];
        for kk in 0..k {
            let row = &cols[(ci * k + kk) * lo..(ci * k + kk + 1) * lo];
            let (s, e) = valid_range(lo, l, kk, stride, pad);
            for (o, &v) in row.iter().enumerate().take(e).skip(s) {
                yr[o * stride + kk - pad] += v;
            }
        }
    }
}

pub(crate) fn conv1d(
    x: &[f64],
    w: &[f64],
    b: usize,
    ci: usize,
    l: usize,
    co: usize,
    k: usize,
    stride: usize,
    pad: usize,
    lo: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(b * co * lo);
    let mut cols = vec![0.0; ci * k * lo];
    for bi in 0..b {
        im2col(&x[bi * ci * l..(bi + 1) * ci * l], ci, l, k, stride, pad, lo, &mut cols);
        out.extend(matmul(w, &cols, co, ci * k, lo));
    }
    out
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = a[r * cols + c];
        }
    }
    t
}

pub(crate) fn conv_transpose1d(
    x: &[f64],
    w: &[f64],
    b: usize,
    ci: usize,
    l: usize,
    co: usize,
    k: usize,
    stride: usize,
    pad: usize,
    out_len: usize,
) -> Vec<f64> {
    // w is [ci, co * k]; each batch element is col2im(wᵀ x).
    let wt = transpose(w, ci, co * k);
    let mut out = vec![0.0; b * co * out_len];
    for bi in 0..b {
        let cols = matmul(&wt, &x[bi * ci * l..(bi + 1) * ci * l], co * k, ci, l);
        col2im(&cols, co, out_len, k, stride, pad, l, &mut out[bi * co * out_len..(bi + 1) * co * out_len]);
    }
    out
}

/// `out[a, c, k] = sum_{b, l} g[b, a, l] * x[b, c, l * stride + k - pad]`
pub(crate) fn conv1d_weight_grad(
    x: &[f64],
    g: &[f64],
    b: usize,
    c: usize,
    lx: usize,
    a: usize,
    lg: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; a * c * k];
    let mut cols = vec![0.0; c * k * lg];
    for bi in 0..b {
        im2col(&x[bi * c * lx..(bi + 1) * c * lx], c, lx, k, stride, pad, lg, &mut cols);
        let colst = transpose(&cols, c * k, lg);
        let part = matmul(&g[bi * a * lg..(bi + 1) * a * lg], &colst, a, lg, c * k);
        out.iter_mut().zip(part).for_each(|(o, v)| *o += v);
    }
    out
}

/// Geometry shared by the 2-D convolution kernels.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Geom2d {
    pub b: usize,
    pub ci: usize,
    pub h: usize,
    pub w: usize,
    pub co: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

/// Column matrix `[ci * kh * kw, ho * wo]` for one batch element.
fn im2col2d(x: &[f64], g: &Geom2d, cols: &mut [f64]) {
    cols.fill(0.0);
    let plane = g.ho * g.wo;
    for i in 0..g.ci {
        let xp = &x[i * g.h * g.w..(i + 1) * g.h * g.w];
        for a in 0..g.kh {
            let (rs, re) = valid_range(g.ho, g.h, a, g.stride, g.pad);
            for c in 0..g.kw {
                let (cs, ce) = valid_range(g.wo, g.w, c, g.stride, g.pad);
                let row = &mut cols[((i * g.kh + a) * g.kw + c) * plane..][..plane];
                for r in rs..re {
                    let xrow = &xp[(r * g.stride + a - g.pad) * g.w..];
                    for col in cs..ce {
                        row[r * g.wo + col] = xrow[col * g.stride + c - g.pad];
                    }
                }
            }
        }
    }
}

fn col2im2d(cols: &[f64], g: &Geom2d, out: &mut [f64]) {
    let plane = g.ho * g.wo;
    for i in 0..g.ci {
        let xp = &mut out[i * g.h * g.w..(i + 1) * g.h * g.w];
        for a in 0..g.kh {
            let (rs, re) = valid_range(g.ho, g.h, a, g.stride, g.pad);
            for c in 0..g.kw {
                let (cs, ce) = valid_range(g.wo, g.w, c, g.stride, g.pad);
                let row = &cols[((i * g.kh + a) * g.kw + c) * plane..][..plane];
                for r in rs..re {
                    let base = (r * g.stride + a - g.pad) * g.w;
                    for col in cs..ce {
                        xp[base + col * g.stride + c - g.pad] += row[r * g.wo + col];
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d(x: &[f64], w: &[f64], g: &Geom2d) -> Vec<f64> {
    let (plane_in, plane_out, patch) = (g.h * g.w, g.ho * g.wo, g.ci * g.kh * g.kw);
    let mut out = Vec::with_capacity(g.b * g.co * plane_out);
    let mut cols = vec![0.0; patch * plane_out];
    for bi in 0..g.b {
        im2col2d(&x[bi * g.ci * plane_in..(bi + 1) * g.ci * plane_in], g, &mut cols);
        out.extend(matmul(w, &cols, g.co, patch, plane_out));
    }
    out
}

/// Adjoint of [`conv2d`] with respect to its input.
pub(crate) fn conv2d_input_grad(gy: &[f64], w: &[f64], g: &Geom2d) -> Vec<f64> {
    let (plane_in, plane_out, patch) = (g.h * g.w, g.ho * g.wo, g.ci * g.kh * g.kw);
    let wt = transpose(w, g.co, patch);
    let mut out = vec![0.0; g.b * g.ci * plane_in];
    for bi in 0..g.b {
        let cols = matmul(&wt, &gy[bi * g.co * plane_out..(bi + 1) * g.co * plane_out], patch, g.co, plane_out);
        col2im2d(&cols, g, &mut out[bi * g.ci * plane_in..(bi + 1) * g.ci * plane_in]);
    }
    out
}

/// Adjoint of [`conv2d`] with respect to its weight.
pub(crate) fn conv2d_weight_grad(x: &[f64], gy: &[f64], g: &Geom2d) -> Vec<f64> {
    let (plane_in, plane_out, patch) = (g.h * g.w, g.ho * g.wo, g.ci * g.kh * g.kw);
    let mut out = vec![0.0; g.co * patch];
    let mut cols = vec![0.0; patch * plane_out];
    for bi in 0..g.b {
        im2col2d(&x[bi * g.ci * plane_in..(bi + 1) * g.ci * plane_in], g, &mut cols);
        let colst = transpose(&cols, patch, plane_out);
        let part = matmul(&gy[bi * g.co * plane_out..(bi + 1) * g.co * plane_out], &colst, g.co, plane_out, patch);
        out.iter_mut().zip(part).for_each(|(o, v)| *o += v);
    }
    out
}
