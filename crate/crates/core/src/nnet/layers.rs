//! Token-major building blocks with their reverse-mode counterparts.
//!
//! Sequences are `rows x d` row-major buffers. Affine weights are stored
//! `d_out x d_in` so `y = x W^T + b`.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::tensor::{gemm, Matrix};

/// Variance floor inside layer normalisation.
pub const LN_EPS: f64 = 1e-10;

/// Sinusoidal position table in `d_model x N` orientation: row `2k` holds
/// `sin(pos / 10000^(2k/d_model))`, row `2k+1` the cosine of the same angle.
pub fn positional_encode(d_model: usize, n: usize) -> Matrix {
    let t = pe_table(d_model, n);
    Matrix::from_fn(d_model, n, |r, c| t[c * d_model + r])
}

/// Same table, token-major (`N x d_model`).
pub(crate) fn pe_table(d: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * d];
    for pos in 0..n {
        for k in (0..d).step_by(2) {
            let angle = pos as f64 / math::pow(10000.0, k as f64 / d as f64);
            out[pos * d + k] = math::sin(angle);
            if k + 1 < d {
                out[pos * d + k + 1] = math::cos(angle);
            }
        }
    }
    out
}

/// `out = x W^T (+ b)` for `x: rows x d_in`, `w: d_out x d_in`.
pub(crate) fn linear(x: &[f64], rows: usize, d_in: usize, w: &[f64], d_out: usize, bias: Option<&[f64]>, out: &mut [f64]) {
    gemm(rows, d_in, d_out, x, false, w, true, out, false);
    if let Some(b) = bias {
        for r in 0..rows {
            for (o, bv) in out[r * d_out..(r + 1) * d_out].iter_mut().zip(b) {
                *o += bv;
            }
        }
    }
}

/// Accumulates `dw += dy^T x`, `db += colsum(dy)` and, when requested,
/// `dx += dy W`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward(
    dy: &[f64],
    x: &[f64],
    rows: usize,
    d_in: usize,
    w: &[f64],
    d_out: usize,
    dw: &mut [f64],
    db: Option<&mut [f64]>,
    dx: Option<&mut [f64]>,
) {
    gemm(d_out, rows, d_in, dy, true, x, false, dw, true);
    if let Some(db) = db {
        for r in 0..rows {
            for (acc, g) in db.iter_mut().zip(&dy[r * d_out..(r + 1) * d_out]) {
                *acc += g;
            }
        }
    }
    if let Some(dx) = dx {
        gemm(rows, d_out, d_in, dy, false, w, false, dx, true);
    }
}

pub(crate) struct LnCache {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
}

/// Row-wise layer normalisation over `d` features with scale `g`, shift `b`.
pub(crate) fn layer_norm(x: &[f64], rows: usize, d: usize, g: &[f64], b: &[f64], out: &mut [f64]) -> LnCache {
    let mut xhat = vec![0.0; rows * d];
    let mut inv_std = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / math::sqrt(var + LN_EPS);
        inv_std[r] = inv;
        for c in 0..d {
            let h = (row[c] - mean) * inv;
            xhat[r * d + c] = h;
            out[r * d + c] = g[c] * h + b[c];
        }
    }
    LnCache { xhat, inv_std }
}

/// Accumulates `dg`, `db`; overwrites `dx`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn layer_norm_backward(
    dy: &[f64],
    cache: &LnCache,
    rows: usize,
    d: usize,
    g: &[f64],
    dg: &mut [f64],
    db: &mut [f64],
    dx: &mut [f64],
) {
    let mut dxhat = vec![0.0; d];
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let mut sum = 0.0;
        let mut sum_xh = 0.0;
        for c in 0..d {
            dg[c] += dyr[c] * xh[c];
            db[c] += dyr[c];
            dxhat[c] = dyr[c] * g[c];
            sum += dxhat[c];
            sum_xh += dxhat[c] * xh[c];
        }
        let scale = cache.inv_std[r] / d as f64;
        for c in 0..d {
            dx[r * d + c] = scale * (d as f64 * dxhat[c] - sum - xh[c] * sum_xh);
        }
    }
}

/// Row-wise softmax in place.
pub(crate) fn softmax_rows(s: &mut [f64], rows: usize, cols: usize) {
    for r in 0..rows {
        let row = &mut s[r * cols..(r + 1) * cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = math::exp(*v - max);
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
}

/// Gradient of a row-wise softmax: `ds = p * (dp - sum(dp * p))`, in place on `dp`.
pub(crate) fn softmax_rows_backward(p: &[f64], dp: &mut [f64], rows: usize, cols: usize) {
    for r in 0..rows {
        let pr = &p[r * cols..(r + 1) * cols];
        let dr = &mut dp[r * cols..(r + 1) * cols];
        let dot: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
        for (d, &pv) in dr.iter_mut().zip(pr) {
            *d = pv * (*d - dot);
        }
    }
}

pub(crate) fn relu_in_place(x: &mut [f64]) {
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zeroes `dy` where the pre-activation was not positive.
pub(crate) fn relu_backward(pre: &[f64], dy: &mut [f64]) {
    for (g, &p) in dy.iter_mut().zip(pre) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}
