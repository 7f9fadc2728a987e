use alloc::format;

use serde::{Deserialize, Serialize};

use super::neighbors::{sq_dist, KdTree};
use super::{delay_points, range_of, PsrParams};
use crate::math;
use crate::{Error, Result};

/// Settings of Wolf's fixed-evolution-time algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WolfParams {
    /// Samples the fiducial/neighbour pair evolves between replacements.
    pub evolve_steps: usize,
    /// Smallest admissible separation (absolute, series units).
    pub min_sep: f64,
    /// Largest separation before the neighbour must be replaced.
    pub max_sep: f64,
    pub theiler: usize,
    /// Radians.
    pub max_replacement_angle: f64,
}

impl WolfParams {
    /// Defaults scaled to the data range: separations `[1e-3, 0.1] * range`,
    /// three evolution steps, 0.3 rad, Theiler window `tau`.
    pub fn for_series(values: &[f64], tau: usize) -> Self {
        let (lo, hi) = range_of(values);
        let range = hi - lo;
        Self {
            evolve_steps: 3,
            min_sep: 1e-3 * range,
            max_sep: 0.1 * range,
            theiler: tau,
            max_replacement_angle: 0.3,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.evolve_steps == 0 {
            return Err(Error::InvalidParameter("evolve_steps must be >= 1".into()));
        }
        if !(self.min_sep > 0.0 && self.min_sep < self.max_sep) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < min_sep < max_sep (min_sep={}, max_sep={})",
                self.min_sep, self.max_sep
            )));
        }
        if !(self.max_replacement_angle > 0.0) {
            return Err(Error::InvalidParameter("max_replacement_angle must be positive".into()));
        }
        Ok(())
    }
}

/// Largest Lyapunov exponent in nats per sample step.
///
/// A fiducial trajectory is followed through the delay embedding together
/// with one neighbour. Every `evolve_steps` samples the growth `ln(d'/d)` is
/// accumulated and the neighbour is replaced by the point that keeps the
/// separation inside `[min_sep, max_sep]` with the smallest angle to the
/// evolved separation vector. When no point qualifies the distance bound is
/// widened (up to 5x) and then the angle bound doubled.
pub fn wolf_lle(values: &[f64], params: PsrParams, wp: &WolfParams) -> Result<f64> {
    wp.validate()?;
    let (lo, hi) = range_of(values);
    if !(hi - lo > 0.0) {
        return Err(Error::DegenerateSeries);
    }
    let ev = wp.evolve_steps;
    let dim = params.m;
    let n = params.points(values.len()).unwrap_or(0);
    if n < 10 * ev {
        return Err(Error::SeriesTooShort {
            needed: params.span() - 1 + 10 * ev,
            got: values.len(),
        });
    }
    let pts = delay_points(values, params.tau, dim, n);
    let point = |i: usize| &pts[i * dim..(i + 1) * dim];
    let dist = |i: usize, j: usize| math::sqrt(sq_dist(point(i), point(j)));
    let min_sep = wp.min_sep;

    // Initial neighbour: nearest point at or beyond min_sep.
    let tree = KdTree::new(&pts, dim);
    let mut nbr = tree
        .nearest(point(0), |k| k.abs_diff(0) <= wp.theiler || k + ev >= n || dist(0, k) < min_sep)
        .ok_or(Error::NoValidNeighbor)?
        .0;

    let mut fid = 0usize;
    let mut log_sum = 0.0;
    let mut elapsed = 0usize;
    while fid + ev < n && nbr + ev < n {
        let d0 = dist(fid, nbr);
        let d1 = dist(fid + ev, nbr + ev);
        if d0 > 0.0 && d1 > 0.0 {
            log_sum += math::ln(d1 / d0);
            elapsed += ev;
        }
        fid += ev;
        if fid + ev >= n {
            break;
        }
        nbr = replacement(&pts, dim, n, fid, nbr + ev, d1, wp)
            .or_else(|| {
                tree.nearest(point(fid), |k| {
                    k.abs_diff(fid) <= wp.theiler || k + ev >= n || dist(fid, k) < min_sep
                })
                .map(|(k, _)| k)
            })
            .ok_or(Error::NoValidNeighbor)?;
    }
    if elapsed == 0 {
        return Err(Error::NoValidNeighbor);
    }
    Ok(log_sum / elapsed as f64)
}

/// Point minimising the angle to the evolved separation `evolved - fid`.
fn replacement(
    pts: &[f64],
    dim: usize,
    n: usize,
    fid: usize,
    evolved: usize,
    evolved_dist: f64,
    wp: &WolfParams,
) -> Option<usize> {
    let ev = wp.evolve_steps;
    let f = &pts[fid * dim..(fid + 1) * dim];
    let e = &pts[evolved * dim..(evolved + 1) * dim];
    let mut angle_limit = wp.max_replacement_angle;
    loop {
        for mult in 1..=5 {
            let upper = wp.max_sep * mult as f64;
            let mut best: Option<(usize, f64)> = None;
            for k in 0..n - ev {
                if k.abs_diff(fid) <= wp.theiler {
                    continue;
                }
                let c = &pts[k * dim..(k + 1) * dim];
                let d = math::sqrt(sq_dist(c, f));
                if d < wp.min_sep || d > upper {
                    continue;
                }
                let angle = if evolved_dist > 0.0 {
                    let dot: f64 = (0..dim).map(|j| (c[j] - f[j]) * (e[j] - f[j])).sum();
                    let cos = (math::abs(dot) / (d * evolved_dist)).min(1.0);
                    math::acos(cos)
                } else {
                    0.0
                };
                if angle <= angle_limit && best.is_none_or(|(_, a)| angle < a) {
                    best = Some((k, angle));
                }
            }
            if let Some((k, _)) = best {
                return Some(k);
            }
        }
        if angle_limit >= core::f64::consts::FRAC_PI_2 {
            return None;
        }
        angle_limit *= 2.0;
    }
}
