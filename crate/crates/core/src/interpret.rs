//! Attention capture and regression activation maps (RAM) of the local branch.
//!
//! RAM is gradient-times-activation on the compressed one-channel map:
//! `RAM = minmax(ReLU(g * P))` where `P` is the compressed map and `g` the
//! gradient of the summed outputs (or of one output step) with respect to it.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::embedding::TrajectoryImage;
use crate::math;
use crate::nnet::Model;
use crate::tensor::Matrix;
use crate::{Error, Result};

/// Formula tag written next to exported maps.
pub const RAM_FORMULA: &str = "ram-v1: minmax(relu(d(sum y)/dP * P)), P = compressed local map";

/// Attention of one head: `matrix[key][query]`, each column sums to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub layer: usize,
    pub head: usize,
    pub matrix: Matrix,
}

/// Every attention matrix of one forward pass, layer-major.
pub fn attention_maps(model: &Model, image: &TrajectoryImage) -> Result<Vec<AttentionRecord>> {
    let cache = model.forward_cached(image)?;
    Ok(cache
        .attention(model.config().n_heads)
        .into_iter()
        .map(|a| AttentionRecord {
            layer: a.layer,
            head: a.head,
            matrix: a.matrix,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamMap {
    /// `m x N`, values in `[0, 1]`.
    pub map: Matrix,
    /// Extremes of the rectified map before scaling.
    pub min_before_scaling: f64,
    pub max_before_scaling: f64,
    pub target_step: Option<usize>,
}

/// RAM of the sum of all outputs, or of output `target_step` alone.
pub fn ram(model: &Model, image: &TrajectoryImage, target_step: Option<usize>) -> Result<RamMap> {
    let cfg = model.config();
    if !cfg.has_local() {
        return Err(Error::VariantHasNoLocalBranch);
    }
    let mut d_out = vec![0.0; cfg.d_pred];
    match target_step {
        Some(k) if k >= cfg.d_pred => {
            return Err(Error::InvalidParameter(format!(
                "target step {k} outside horizon {}",
                cfg.d_pred
            )))
        }
        Some(k) => d_out[k] = 1.0,
        None => d_out.iter_mut().for_each(|v| *v = 1.0),
    }
    let cache = model.forward_cached(image)?;
    let grad = model.local_map_gradient(&cache, &d_out)?;
    let act = cache.local_map().ok_or(Error::VariantHasNoLocalBranch)?;
    let raw: Vec<f64> = grad.iter().zip(act).map(|(g, a)| (g * a).max(0.0)).collect();
    let raw = Matrix::from_vec(cfg.m, cfg.n, raw);
    let (lo, hi) = raw.min_max();
    Ok(RamMap {
        map: min_max_scaled(&raw),
        min_before_scaling: lo,
        max_before_scaling: hi,
        target_step,
    })
}

/// Scales into `[0, 1]`; a constant matrix maps to zeros.
pub fn min_max_scaled(m: &Matrix) -> Matrix {
    let (lo, hi) = m.min_max();
    let range = hi - lo;
    Matrix::from_fn(m.rows(), m.cols(), |r, c| {
        if range > 0.0 {
            (m.get(r, c) - lo) / range
        } else {
            0.0
        }
    })
}

/// Binary greyscale raster (P5), 8-bit min-max scaled, row-major.
pub fn to_pgm(m: &Matrix) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", m.cols(), m.rows()).into_bytes();
    let scaled = min_max_scaled(m);
    out.extend(scaled.as_slice().iter().map(|v| math::round(v * 255.0) as u8));
    out
}

/// Comma-separated rows with round-trip exact values.
pub fn to_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for r in 0..m.rows() {
        for (c, v) in m.row(r).iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v:?}");
        }
        out.push('\n');
    }
    out
}

/// Inverse of [`to_csv`].
pub fn parse_csv(text: &str) -> Result<Matrix> {
    let mut rows = 0;
    let mut cols = None;
    let mut data = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let before = data.len();
        for cell in line.split(',') {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("unparseable cell {cell:?} in row {rows}")))?;
            data.push(v);
        }
        let width = data.len() - before;
        if *cols.get_or_insert(width) != width {
            return Err(Error::ShapeMismatch(format!("row {rows} has {width} cells")));
        }
        rows += 1;
    }
    Ok(Matrix::from_vec(rows, cols.unwrap_or(0), data))
}
