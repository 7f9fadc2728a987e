use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::delay_points;
use super::neighbors::KdTree;
use crate::{Error, Result};

/// False-nearest-neighbour fraction per embedding dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FnnProfile {
    pub dims: Vec<usize>,
    pub fraction: Vec<f64>,
    /// Threshold on the ratio of squared distances after/before lifting.
    pub epsilon: f64,
    pub theiler: usize,
}

/// Outcome of the dimension search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimEstimate {
    pub m: usize,
    /// False when no dimension up to `m_max` fell below the threshold.
    pub converged: bool,
    pub profile: FnnProfile,
}

/// Fraction of phase points whose nearest neighbour in dimension `m` is
/// false: the squared distance after appending coordinate `m` (lag `m*tau`)
/// is at least `epsilon` times the squared distance in dimension `m`.
///
/// Neighbours within `theiler` samples of the point are excluded. Points whose
/// nearest neighbour coincides with them (zero distance) are not testable.
pub fn fnn_fraction(values: &[f64], tau: usize, m: usize, epsilon: f64, theiler: usize) -> Result<f64> {
    if tau == 0 || m == 0 {
        return Err(Error::InvalidParameter(format!("tau={tau}, m={m} must be >= 1")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    let needed = m * tau + 2;
    if values.len() < needed {
        return Err(Error::SeriesTooShort {
            needed,
            got: values.len(),
        });
    }
    // Every point must have its (m+1)-th coordinate available.
    let n = values.len() - m * tau;
    let pts = delay_points(values, tau, m, n);
    let tree = KdTree::new(&pts, m);
    let mut testable = 0usize;
    let mut false_count = 0usize;
    for i in 0..n {
        let query = &pts[i * m..(i + 1) * m];
        let Some((j, d2)) = tree.nearest(query, |k| k.abs_diff(i) <= theiler) else {
            continue;
        };
        if d2 == 0.0 {
            continue;
        }
        testable += 1;
        let extra = values[i + m * tau] - values[j + m * tau];
        let lifted = d2 + extra * extra;
        if lifted / d2 >= epsilon {
            false_count += 1;
        }
    }
    if testable == 0 {
        return Err(Error::NoValidNeighbor);
    }
    Ok(false_count as f64 / testable as f64)
}

pub fn fnn_profile(
    values: &[f64],
    tau: usize,
    m_max: usize,
    epsilon: f64,
    theiler: usize,
) -> Result<FnnProfile> {
    let mut dims = Vec::with_capacity(m_max);
    let mut fraction = Vec::with_capacity(m_max);
    for m in 1..=m_max {
        dims.push(m);
        fraction.push(fnn_fraction(values, tau, m, epsilon, theiler)?);
    }
    Ok(FnnProfile {
        dims,
        fraction,
        epsilon,
        theiler,
    })
}

/// Smallest `m` in `1..=m_max` whose FNN fraction is below `threshold`;
/// `m_max` with `converged = false` when none is.
pub fn estimate_dim(
    values: &[f64],
    tau: usize,
    m_max: usize,
    epsilon: f64,
    threshold: f64,
    theiler: usize,
) -> Result<DimEstimate> {
    if m_max < 2 {
        return Err(Error::InvalidParameter(format!("m_max must be >= 2, got {m_max}")));
    }
    let mut profile = FnnProfile {
        dims: Vec::new(),
        fraction: Vec::new(),
        epsilon,
        theiler,
    };
    for m in 1..=m_max {
        let f = fnn_fraction(values, tau, m, epsilon, theiler)?;
        profile.dims.push(m);
        profile.fraction.push(f);
        if f < threshold {
            return Ok(DimEstimate {
                m,
                converged: true,
                profile,
            });
        }
    }
    log::warn!("FNN fraction never fell below {threshold} up to m = {m_max}");
    Ok(DimEstimate {
        m: m_max,
        converged: false,
        profile,
    })
}
