use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::range_of;
use crate::math;
use crate::{Error, Result};

/// Mutual information of the lagged pairs `(x[t], x[t + tau])` for each lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiProfile {
    pub taus: Vec<usize>,
    /// Nats.
    pub mi: Vec<f64>,
    pub bins: usize,
}

/// Which minimum of the MI profile selects the delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayRule {
    /// Global minimum over the searched lags.
    #[default]
    GlobalMin,
    /// First lag whose MI is lower than both neighbours; global minimum if none.
    FirstLocalMin,
}

fn bin_indices(v: &[f64], bins: usize) -> Result<Vec<usize>> {
    let (lo, hi) = range_of(v);
    let span = hi - lo;
    if !(span > 0.0) {
        return Err(Error::DegenerateSeries);
    }
    let scale = bins as f64 / span;
    Ok(v.iter()
        .map(|&x| (((x - lo) * scale) as usize).min(bins - 1))
        .collect())
}

/// Histogram estimate of `I(X;Y)` in nats with `bins x bins` equal-width
/// cells spanning each variable's own range.
pub fn mutual_information(x: &[f64], y: &[f64], bins: usize) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::SeriesTooShort {
            needed: 2,
            got: x.len(),
        });
    }
    if bins < 2 {
        return Err(Error::InvalidParameter(format!("bins must be >= 2, got {bins}")));
    }
    let bx = bin_indices(x, bins)?;
    let by = bin_indices(y, bins)?;
    let mut joint = vec![0u64; bins * bins];
    let mut px = vec![0u64; bins];
    let mut py = vec![0u64; bins];
    for (&i, &j) in bx.iter().zip(&by) {
        joint[i * bins + j] += 1;
        px[i] += 1;
        py[j] += 1;
    }
    let n = x.len() as f64;
    let mut terms: Vec<f64> = Vec::new();
    for i in 0..bins {
        for j in 0..bins {
            let c = joint[i * bins + j];
            if c == 0 {
                continue;
            }
            let c = c as f64;
            // p(x,y) / (p(x) p(y)) = c * n / (c_x * c_y); the product is
            // commutative so swapping x and y yields bit-identical terms.
            let ratio = c * n / ((px[i] as f64) * (py[j] as f64));
            terms.push(c / n * math::ln(ratio));
        }
    }
    // Canonical summation order makes I(x,y) == I(y,x) exactly.
    terms.sort_by(f64::total_cmp);
    let mi: f64 = terms.iter().sum();
    Ok(if mi < 0.0 { 0.0 } else { mi })
}

/// MI between the series and its lagged copy for lags `1..=tau_max`.
pub fn mi_profile(values: &[f64], tau_max: usize, bins: usize) -> Result<MiProfile> {
    if tau_max == 0 || 2 * tau_max >= values.len() {
        return Err(Error::InvalidParameter(format!(
            "tau_max must satisfy 1 <= tau_max < len/2 (tau_max={tau_max}, len={})",
            values.len()
        )));
    }
    let t = values.len();
    let mut taus = Vec::with_capacity(tau_max);
    let mut mi = Vec::with_capacity(tau_max);
    for tau in 1..=tau_max {
        taus.push(tau);
        mi.push(mutual_information(&values[..t - tau], &values[tau..], bins)?);
    }
    Ok(MiProfile { taus, mi, bins })
}

/// Lag at the minimum of the profile; ties go to the smallest lag.
pub fn estimate_delay(profile: &MiProfile, rule: DelayRule) -> Result<usize> {
    if profile.mi.is_empty() || profile.mi.len() != profile.taus.len() {
        return Err(Error::EmptyProfile);
    }
    let mi = &profile.mi;
    if rule == DelayRule::FirstLocalMin {
        for k in 1..mi.len().saturating_sub(1) {
            if mi[k] < mi[k - 1] && mi[k] <= mi[k + 1] {
                return Ok(profile.taus[k]);
            }
        }
    }
    let mut best = 0;
    for k in 1..mi.len() {
        if mi[k] < mi[best] {
            best = k;
        }
    }
    Ok(profile.taus[best])
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct double-loop joint histogram, independent of the sorted-sum path.
    fn brute_mi(x: &[f64], y: &[f64], bins: usize) -> f64 {
        let idx = |v: &[f64], k: usize| {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let b = ((v[k] - lo) / (hi - lo) * bins as f64).floor() as usize;
            b.min(bins - 1)
        };
        let n = x.len();
        let mut total = 0.0;
        for a in 0..bins {
            for b in 0..bins {
                let mut cxy = 0usize;
                let mut cx = 0usize;
                let mut cy = 0usize;
                for k in 0..n {
                    let (ix, iy) = (idx(x, k), idx(y, k));
                    if ix == a {
                        cx += 1;
                    }
                    if iy == b {
                        cy += 1;
                    }
                    if ix == a && iy == b {
                        cxy += 1;
                    }
                }
                if cxy > 0 {
                    let pxy = cxy as f64 / n as f64;
                    let px = cx as f64 / n as f64;
                    let py = cy as f64 / n as f64;
                    total += pxy * (pxy / (px * py)).ln();
                }
            }
        }
        total.max(0.0)
    }

    fn lcg(seed: u64, n: usize) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect()
    }

    #[test]
    fn identical_balanced_binary_gives_ln2() {
        let x = [0.0, 1.0, 0.0, 1.0];
        let mi = mutual_information(&x, &x, 2).unwrap();
        assert!((mi - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn product_distribution_gives_zero() {
        let mi = mutual_information(&[0.0, 0.0, 1.0, 1.0], &[0.0, 1.0, 0.0, 1.0], 2).unwrap();
        assert_eq!(mi, 0.0);
    }

    #[test]
    fn matches_brute_force_histogram() {
        let x = lcg(1, 500);
        let y: Vec<f64> = lcg(2, 500).iter().zip(&x).map(|(a, b)| a + 0.5 * b * b).collect();
        for bins in [2, 7, 16] {
            let fast = mutual_information(&x, &y, bins).unwrap();
            let slow = brute_mi(&x, &y, bins);
            assert!((fast - slow).abs() < 1e-12, "bins={bins}: {fast} vs {slow}");
        }
    }

    #[test]
    fn symmetric_and_self_information_is_entropy() {
        let x = lcg(3, 800);
        let y = lcg(4, 800);
        assert_eq!(
            mutual_information(&x, &y, 16).unwrap(),
            mutual_information(&y, &x, 16).unwrap()
        );
        let bins = 10;
        let mut counts = [0usize; 10];
        for &v in &x {
            let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            counts[(((v - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1)] += 1;
        }
        let n = x.len() as f64;
        let h: f64 = counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| -(c as f64 / n) * (c as f64 / n).ln())
            .sum();
        assert!((mutual_information(&x, &x, bins).unwrap() - h).abs() < 1e-12);
    }

    #[test]
    fn error_cases() {
        assert!(matches!(
            mutual_information(&[1.0, 2.0], &[1.0], 4),
            Err(Error::LengthMismatch { .. })
        ));
        assert_eq!(
            mutual_information(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], 4),
            Err(Error::DegenerateSeries)
        );
        assert!(mi_profile(&[1.0, 2.0, 3.0, 4.0], 2, 4).is_err());
    }

    #[test]
    fn delay_rules() {
        let p = MiProfile {
            taus: alloc::vec![1, 2, 3],
            mi: alloc::vec![3.0, 1.0, 2.0],
            bins: 4,
        };
        assert_eq!(estimate_delay(&p, DelayRule::GlobalMin).unwrap(), 2);
        let flat = MiProfile {
            taus: alloc::vec![1, 2, 3],
            mi: alloc::vec![1.0, 1.0, 1.0],
            bins: 4,
        };
        assert_eq!(estimate_delay(&flat, DelayRule::GlobalMin).unwrap(), 1);
        let two_dips = MiProfile {
            taus: alloc::vec![1, 2, 3, 4, 5],
            mi: alloc::vec![3.0, 2.0, 2.5, 0.5, 1.0],
            bins: 4,
        };
        assert_eq!(estimate_delay(&two_dips, DelayRule::FirstLocalMin).unwrap(), 2);
        assert_eq!(estimate_delay(&two_dips, DelayRule::GlobalMin).unwrap(), 4);
        let empty = MiProfile { taus: Vec::new(), mi: Vec::new(), bins: 4 };
        assert_eq!(estimate_delay(&empty, DelayRule::GlobalMin), Err(Error::EmptyProfile));
    }
}
