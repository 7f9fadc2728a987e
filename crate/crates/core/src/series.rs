//! Univariate load series, chronological splits and z-score normalisation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Error, Result};

/// A uniformly sampled univariate series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    step_minutes: f64,
    origin: Option<String>,
    name: String,
}

impl TimeSeries {
    pub fn new(name: impl Into<String>, values: Vec<f64>, step_minutes: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySeries);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { index });
        }
        if !(step_minutes > 0.0) || !step_minutes.is_finite() {
            return Err(Error::InvalidStep(step_minutes));
        }
        Ok(Self {
            values,
            step_minutes,
            origin: None,
            name: name.into(),
        })
    }

    pub fn with_origin(mut self, origin: impl Into<String>) -> Self {
        self.origin = Some(origin.into());
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn step_minutes(&self) -> f64 {
        self.step_minutes
    }

    pub fn origin(&self) -> Option<&str> {
        self.origin.as_deref()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Same metadata, new values (used for derived segments).
    fn derive(&self, suffix: &str, values: Vec<f64>) -> Result<Self> {
        let mut out = Self::new(format!("{}{}", self.name, suffix), values, self.step_minutes)?;
        out.origin = self.origin.clone();
        Ok(out)
    }
}

/// Fills gaps (`None`) by linear interpolation between the nearest valid
/// samples on either side. Gaps touching either end cannot be filled.
pub fn interpolate_gaps(raw: &[Option<f64>]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::EmptySeries);
    }
    let mut out = Vec::with_capacity(raw.len());
    let mut last_valid: Option<usize> = None;
    let mut i = 0;
    while i < raw.len() {
        match raw[i] {
            Some(v) => {
                out.push(v);
                last_valid = Some(i);
                i += 1;
            }
            None => {
                let left = last_valid.ok_or(Error::LeadingOrTrailingGap { index: i })?;
                let right = (i..raw.len())
                    .find(|&j| raw[j].is_some())
                    .ok_or(Error::LeadingOrTrailingGap { index: i })?;
                let (x0, x1) = (raw[left].unwrap_or(0.0), raw[right].unwrap_or(0.0));
                let span = (right - left) as f64;
                for j in i..right {
                    let w = (j - left) as f64 / span;
                    out.push(x0 + (x1 - x0) * w);
                }
                i = right;
            }
        }
    }
    Ok(out)
}

/// Fractions of a chronological train/validation/test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let spec = Self { train, val, test };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("train", self.train), ("val", self.val), ("test", self.test)] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidSplit(format!("{name} fraction {f} not in (0,1)")));
            }
        }
        let sum = self.train + self.val + self.test;
        if math::abs(sum - 1.0) > 1e-9 {
            return Err(Error::InvalidSplit(format!("fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// Segment lengths for a series of `len` samples: train and validation
    /// are floored, the test segment takes the remainder.
    pub fn lengths(&self, len: usize) -> (usize, usize, usize) {
        // Tolerance absorbs products like 0.7 * 100 = 70.00000000000001 and 69.999...
        let floor_frac = |f: f64| math::floor(f * len as f64 + 1e-9) as usize;
        let train = floor_frac(self.train).min(len);
        let val = floor_frac(self.val).min(len - train);
        (train, val, len - train - val)
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

/// Chronological, contiguous split into (train, validation, test).
pub fn split(ts: &TimeSeries, spec: &SplitSpec) -> Result<(TimeSeries, TimeSeries, TimeSeries)> {
    spec.validate()?;
    let (n_train, n_val, n_test) = spec.lengths(ts.len());
    for (segment, len) in [("train", n_train), ("val", n_val), ("test", n_test)] {
        if len == 0 {
            return Err(Error::SegmentTooShort { segment, len });
        }
    }
    let v = ts.values();
    Ok((
        ts.derive(":train", v[..n_train].to_vec())?,
        ts.derive(":val", v[n_train..n_train + n_val].to_vec())?,
        ts.derive(":test", v[n_train + n_val..].to_vec())?,
    ))
}

/// Z-score statistics (population standard deviation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

impl NormStats {
    /// Fit on the training segment only.
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySeries);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = math::sqrt(var);
        if !(std > 0.0) || !std.is_finite() {
            return Err(Error::DegenerateSeries);
        }
        Ok(Self { mean, std })
    }

    #[inline]
    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    #[inline]
    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&v| self.normalize(v)).collect()
    }

    pub fn invert(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&z| self.denormalize(z)).collect()
    }
}
