//! Row-major dense matrices and the handful of kernels the network needs.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// `c = op(a) * op(b)` (or `c += ...` when `accumulate`), with `op(a)` of
/// shape `m x k` and `op(b)` of shape `k x n`, all row-major.
///
/// `a_t` means `a` is stored as `k x m` and used transposed; likewise `b_t`
/// means `b` is stored as `n x k`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    let (rsa, csa) = if a_t { (1, m) } else { (k, 1) };
    let (rsb, csb) = if b_t { (1, k) } else { (n, 1) };
    gemm_strided(m, k, n, a, (rsa, csa), b, (rsb, csb), c, (n, 1), accumulate);
}

/// General strided product `c = a * b` with `a: m x k`, `b: k x n` given as
/// (row stride, column stride) views into the slices.
#[allow(clippy::too_many_arguments)]
pub fn gemm_strided(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    (rsc, csc): (usize, usize),
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!((m - 1) * rsc + (n - 1) * csc < c.len(), "gemm: output view out of bounds");
    if k == 0 {
        if !accumulate {
            for i in 0..m {
                for j in 0..n {
                    c[i * rsc + j * csc] = 0.0;
                }
            }
        }
        return;
    }
    assert!((m - 1) * rsa + (k - 1) * csa < a.len(), "gemm: lhs view out of bounds");
    assert!((k - 1) * rsb + (n - 1) * csb < b.len(), "gemm: rhs view out of bounds");
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above bound every element reachable through the
    // strides by the lengths of the three slices.
    #[allow(unsafe_code)]
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
            rsc as isize,
            csc as isize,
        );
    }
}

/// `y = a * x` (or `y += ...`) for `a` stored `rows x cols`.
pub fn matvec(a: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64], accumulate: bool) {
    debug_assert_eq!(a.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    for (r, out) in y.iter_mut().enumerate().take(rows) {
        let row = &a[r * cols..(r + 1) * cols];
        let dot: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
        if accumulate {
            *out += dot;
        } else {
            *out = dot;
        }
    }
}

/// `y += a^T * x` for `a` stored `rows x cols` (so `x` has `rows` entries).
pub fn matvec_t_acc(a: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(y.len(), cols);
    for r in 0..rows {
        let xr = x[r];
        if xr == 0.0 {
            continue;
        }
        let row = &a[r * cols..(r + 1) * cols];
        for (acc, w) in y.iter_mut().zip(row) {
            *acc += w * xr;
        }
    }
}

/// `g += outer(u, v)` where `g` is `u.len() x v.len()`.
pub fn outer_acc(u: &[f64], v: &[f64], g: &mut [f64]) {
    let cols = v.len();
    for (r, &ur) in u.iter().enumerate() {
        if ur == 0.0 {
            continue;
        }
        let row = &mut g[r * cols..(r + 1) * cols];
        for (acc, &vc) in row.iter_mut().zip(v) {
            *acc += ur * vc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    let av = if a_t { a[p * m + i] } else { a[i * k + p] };
                    let bv = if b_t { b[j * k + p] } else { b[p * n + j] };
                    s += av * bv;
                }
                c[i * n + j] = s;
            }
        }
        c
    }

    #[test]
    fn gemm_matches_triple_loop_for_all_transpose_combinations() {
        let (m, k, n) = (5, 7, 3);
        let a: Vec<f64> = (0..m * k).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| ((i * 13 % 7) as f64) * 0.5 - 1.0).collect();
        for &a_t in &[false, true] {
            for &b_t in &[false, true] {
                let mut c = vec![f64::NAN; m * n];
                gemm(m, k, n, &a, a_t, &b, b_t, &mut c, false);
                let expect = naive(m, k, n, &a, a_t, &b, b_t);
                for (x, y) in c.iter().zip(&expect) {
                    assert!((x - y).abs() < 1e-12);
                }
                gemm(m, k, n, &a, a_t, &b, b_t, &mut c, true);
                for (x, y) in c.iter().zip(&expect) {
                    assert!((x - 2.0 * y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn matvec_variants() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut y = [0.0; 2];
        matvec(&a, 2, 3, &[1.0, 0.0, -1.0], &mut y, false);
        assert_eq!(y, [-2.0, -2.0]);
        let mut z = [0.0; 3];
        matvec_t_acc(&a, 2, 3, &[1.0, 1.0], &mut z);
        assert_eq!(z, [5.0, 7.0, 9.0]);
        let mut g = [0.0; 6];
        outer_acc(&[1.0, 2.0], &[1.0, 0.0, 3.0], &mut g);
        assert_eq!(g, [1.0, 0.0, 3.0, 2.0, 0.0, 6.0]);
    }
}
