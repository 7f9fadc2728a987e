//! Trajectory matrices, patch matrices and supervised training windows.
//!
//! A trajectory matrix stacks the delay coordinates of every phase point as
//! columns (rows = embedding dimensions, columns = phase points). A patch
//! matrix stacks fixed-length, fixed-stride slices as rows. With stride equal
//! to the delay and patch length `L - (m-1)*tau`, the two coincide.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::chaos::PsrParams;
use crate::tensor::Matrix;
use crate::{Error, Result};

/// An `m x N` trajectory matrix, viewed as a one-channel image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryImage {
    data: Matrix,
    params: PsrParams,
}

impl TrajectoryImage {
    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn params(&self) -> PsrParams {
        self.params
    }

    /// Embedding dimension (image height).
    pub fn m(&self) -> usize {
        self.data.rows()
    }

    /// Number of phase points (image width).
    pub fn n(&self) -> usize {
        self.data.cols()
    }

    /// Wraps an existing `m x N` matrix, e.g. a perturbed copy.
    pub fn from_matrix(data: Matrix, params: PsrParams) -> Result<Self> {
        if data.rows() != params.m || data.cols() == 0 {
            return Err(Error::ShapeMismatch(alloc::format!(
                "image is {}x{}, params ask for m={}",
                data.rows(),
                data.cols(),
                params.m
            )));
        }
        Ok(Self { data, params })
    }
}

/// Delay-embedding of a window: element `(j, i)` is `window[i + j*tau]`.
pub fn trajectory_matrix(window: &[f64], params: PsrParams) -> Result<TrajectoryImage> {
    let n = params.points(window.len()).ok_or(Error::WindowTooShort {
        needed: params.span(),
        got: window.len(),
    })?;
    let data = Matrix::from_fn(params.m, n, |j, i| window[i + j * params.tau]);
    Ok(TrajectoryImage { data, params })
}

/// `M x p` matrix of patches: row `i` is `window[i*s .. i*s + p]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchMatrix {
    pub data: Matrix,
    pub p: usize,
    pub s: usize,
}

impl PatchMatrix {
    pub fn count(&self) -> usize {
        self.data.rows()
    }
}

pub fn patch_matrix(window: &[f64], p: usize, s: usize) -> Result<PatchMatrix> {
    if p == 0 || s == 0 {
        return Err(Error::InvalidParameter("patch length and stride must be >= 1".into()));
    }
    if window.len() < p {
        return Err(Error::WindowTooShort {
            needed: p,
            got: window.len(),
        });
    }
    let rows = (window.len() - p) / s + 1;
    let data = Matrix::from_fn(rows, p, |i, j| window[j + i * s]);
    Ok(PatchMatrix { data, p, s })
}

/// Patch length and stride under which the patch matrix of a length-`len`
/// window equals its trajectory matrix: `s = tau`, `p = len - (m-1)*tau`.
pub fn equivalence_params(len: usize, params: PsrParams) -> Result<(usize, usize)> {
    let p = params.points(len).ok_or(Error::WindowTooShort {
        needed: params.span(),
        got: len,
    })?;
    Ok((p, params.tau))
}

/// Delay embedding with per-row delays: row `j` starts at the sum of the
/// first `j` delays. Equal delays reproduce [`trajectory_matrix`].
pub fn nonuniform_trajectory_matrix(window: &[f64], delays: &[usize]) -> Result<Matrix> {
    if delays.contains(&0) {
        return Err(Error::InvalidParameter("delays must be >= 1".into()));
    }
    let mut offsets = Vec::with_capacity(delays.len() + 1);
    offsets.push(0usize);
    for &d in delays {
        offsets.push(offsets[offsets.len() - 1] + d);
    }
    let last = offsets[offsets.len() - 1];
    if window.len() < last + 1 {
        return Err(Error::WindowTooShort {
            needed: last + 1,
            got: window.len(),
        });
    }
    let n = window.len() - last;
    Ok(Matrix::from_fn(offsets.len(), n, |j, i| window[i + offsets[j]]))
}

/// Patches with per-patch strides: patch `i` starts at the sum of the first
/// `i` strides and has length `p`.
pub fn nonuniform_patch_matrix(window: &[f64], p: usize, strides: &[usize]) -> Result<Matrix> {
    let mut starts = Vec::with_capacity(strides.len() + 1);
    starts.push(0usize);
    for &s in strides {
        starts.push(starts[starts.len() - 1] + s);
    }
    let needed = starts[starts.len() - 1] + p;
    if p == 0 || window.len() < needed {
        return Err(Error::WindowTooShort {
            needed,
            got: window.len(),
        });
    }
    Ok(Matrix::from_fn(starts.len(), p, |i, j| window[starts[i] + j]))
}

/// One supervised example: the image of a look-back window and the values
/// that immediately follow it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPair {
    pub image: TrajectoryImage,
    /// Normalised targets, `horizon` values.
    pub target: Vec<f64>,
    /// Index of the window's first sample within its segment.
    pub window_start: usize,
}

/// Sliding windows over one (already normalised) segment.
pub fn build_windows(
    values: &[f64],
    lookback: usize,
    horizon: usize,
    params: PsrParams,
    stride: usize,
) -> Result<Vec<WindowPair>> {
    if lookback == 0 || horizon == 0 || stride == 0 {
        return Err(Error::InvalidParameter(
            "lookback, horizon and stride must be >= 1".into(),
        ));
    }
    if values.len() < lookback + horizon {
        return Err(Error::SeriesTooShort {
            needed: lookback + horizon,
            got: values.len(),
        });
    }
    let n = params.points(lookback).ok_or(Error::WindowTooShort {
        needed: params.span(),
        got: lookback,
    })?;
    if n <= params.m {
        log::warn!(
            "trajectory image is {}x{}: phase points do not dominate the embedding dimension",
            params.m,
            n
        );
    }
    let count = (values.len() - lookback - horizon) / stride + 1;
    (0..count)
        .map(|k| {
            let start = k * stride;
            Ok(WindowPair {
                image: trajectory_matrix(&values[start..start + lookback], params)?,
                target: values[start + lookback..start + lookback + horizon].to_vec(),
                window_start: start,
            })
        })
        .collect()
}

/// Number of windows [`build_windows`] produces.
pub fn window_count(len: usize, lookback: usize, horizon: usize, stride: usize) -> usize {
    if len < lookback + horizon || stride == 0 {
        0
    } else {
        (len - lookback - horizon) / stride + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn seq(n: usize) -> Vec<f64> {
        (1..=n).map(|v| v as f64).collect()
    }

    #[test]
    fn worked_trajectory_example() {
        let t = trajectory_matrix(&seq(7), PsrParams { tau: 2, m: 3 }).unwrap();
        assert_eq!(t.n(), 3);
        assert_eq!(t.data().col(0), vec![1.0, 3.0, 5.0]);
        assert_eq!(t.data().col(1), vec![2.0, 4.0, 6.0]);
        assert_eq!(t.data().col(2), vec![3.0, 5.0, 7.0]);
        let id = trajectory_matrix(&seq(5), PsrParams { tau: 1, m: 1 }).unwrap();
        assert_eq!(id.data().row(0), seq(5).as_slice());
        assert!(matches!(
            trajectory_matrix(&seq(4), PsrParams { tau: 2, m: 3 }),
            Err(Error::WindowTooShort { needed: 5, got: 4 })
        ));
    }

    #[test]
    fn worked_patch_example() {
        let p = patch_matrix(&seq(6), 3, 1).unwrap();
        assert_eq!(p.count(), 4);
        assert_eq!(p.data.row(3), &[4.0, 5.0, 6.0]);
        let whole = patch_matrix(&seq(6), 6, 2).unwrap();
        assert_eq!(whole.count(), 1);
        assert_eq!(whole.data.row(0), seq(6).as_slice());
    }

    #[test]
    fn equivalence_worked_instances() {
        let params = PsrParams { tau: 2, m: 3 };
        assert_eq!(equivalence_params(7, params).unwrap(), (3, 2));
        let (p, s) = equivalence_params(7, params).unwrap();
        let patches = patch_matrix(&seq(7), p, s).unwrap();
        assert_eq!(patches.data.row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(patches.data.row(1), &[3.0, 4.0, 5.0]);
        assert_eq!(patches.data.row(2), &[5.0, 6.0, 7.0]);
        assert_eq!(&patches.data, trajectory_matrix(&seq(7), params).unwrap().data());
        assert_eq!(equivalence_params(192, PsrParams { tau: 40, m: 5 }).unwrap(), (32, 40));
    }

    #[test]
    fn nonuniform_offsets_are_prefix_sums() {
        let t = nonuniform_trajectory_matrix(&seq(8), &[1, 2]).unwrap();
        assert_eq!(t.row(0), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(t.row(1), &[2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(t.row(2), &[4.0, 5.0, 6.0, 7.0, 8.0]);
        let uniform = nonuniform_trajectory_matrix(&seq(20), &[3, 3, 3]).unwrap();
        assert_eq!(&uniform, trajectory_matrix(&seq(20), PsrParams { tau: 3, m: 4 }).unwrap().data());
    }

    #[test]
    fn window_counts() {
        let v = seq(10);
        let params = PsrParams { tau: 1, m: 2 };
        let w = build_windows(&v, 4, 2, params, 1).unwrap();
        assert_eq!(w.len(), 5);
        assert_eq!(w[0].image.data().row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(w[0].image.data().row(1), &[2.0, 3.0, 4.0]);
        assert_eq!(w[0].target, vec![5.0, 6.0]);
        assert_eq!(w[4].window_start, 4);
        assert_eq!(build_windows(&seq(6), 4, 2, params, 1).unwrap().len(), 1);
        assert!(build_windows(&seq(5), 4, 2, params, 1).is_err());
        assert_eq!(window_count(10, 4, 2, 2), 3);
        assert_eq!(build_windows(&v, 4, 2, params, 2).unwrap().len(), 3);
    }

    #[test]
    fn paper_scale_window_count() {
        // Closed form against enumeration of admissible start indices.
        let (len, l, h) = (35040, 192, 96);
        let enumerated = (0..len).filter(|&s| s + l + h <= len).count();
        assert_eq!(window_count(len, l, h, 1), enumerated);
        assert_eq!(enumerated, 34753);
    }
}
