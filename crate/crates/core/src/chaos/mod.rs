//! Chaos diagnostics: delay time by mutual information, embedding dimension
//! by false nearest neighbours, and Wolf's largest Lyapunov exponent.

mod fnn;
mod lyapunov;
mod mi;
pub(crate) mod neighbors;

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use fnn::{estimate_dim, fnn_fraction, fnn_profile, DimEstimate, FnnProfile};
pub use lyapunov::{wolf_lle, WolfParams};
pub use mi::{estimate_delay, mi_profile, mutual_information, DelayRule, MiProfile};

/// Delay time and embedding dimension of a uniform delay embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PsrParams {
    pub tau: usize,
    pub m: usize,
}

impl PsrParams {
    pub fn new(tau: usize, m: usize) -> Result<Self> {
        if tau == 0 || m == 0 {
            return Err(Error::InvalidParameter(format!(
                "tau and m must be >= 1 (tau={tau}, m={m})"
            )));
        }
        Ok(Self { tau, m })
    }

    /// Span of one phase point in samples: `(m - 1) * tau + 1`.
    pub fn span(&self) -> usize {
        (self.m - 1) * self.tau + 1
    }

    /// Number of phase points a series of `len` samples yields.
    pub fn points(&self, len: usize) -> Option<usize> {
        len.checked_sub(self.span() - 1).filter(|&n| n >= 1)
    }
}

/// Phase points of `values` as a flat `n x dim` buffer, coordinate `j` of
/// point `i` being `values[i + j * tau]`. Only the first `n` points are kept.
pub(crate) fn delay_points(values: &[f64], tau: usize, dim: usize, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * dim);
    for i in 0..n {
        for j in 0..dim {
            out.push(values[i + j * tau]);
        }
    }
    out
}

pub(crate) fn range_of(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisOptions {
    pub tau_max: usize,
    pub m_max: usize,
    pub bins: usize,
    pub delay_rule: DelayRule,
    pub fnn_epsilon: f64,
    pub fnn_threshold: f64,
    /// Theiler window; `None` means the selected delay.
    pub theiler: Option<usize>,
    pub wolf_evolve_steps: usize,
    pub wolf_max_angle: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            tau_max: 200,
            m_max: 10,
            bins: 64,
            delay_rule: DelayRule::GlobalMin,
            fnn_epsilon: 100.0,
            fnn_threshold: 0.05,
            theiler: None,
            wolf_evolve_steps: 3,
            wolf_max_angle: 0.3,
        }
    }
}

/// Delay, dimension and LLE of one series, with the profiles behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosReport {
    pub tau: usize,
    pub m: usize,
    pub m_converged: bool,
    /// Nats per sample step.
    pub lle: f64,
    pub mi_profile: MiProfile,
    pub fnn_profile: FnnProfile,
    pub wolf: WolfParams,
    pub options: AnalysisOptions,
}

impl ChaosReport {
    pub fn params(&self) -> PsrParams {
        PsrParams {
            tau: self.tau,
            m: self.m,
        }
    }
}

/// Runs the MI delay search, the FNN dimension search and Wolf's LLE in turn.
/// `tau_max` is clipped below half the series length.
pub fn analyze(values: &[f64], opts: &AnalysisOptions) -> Result<ChaosReport> {
    let cap = values.len().saturating_sub(1) / 2;
    let tau_max = opts.tau_max.min(cap);
    if tau_max == 0 {
        return Err(Error::SeriesTooShort {
            needed: 4,
            got: values.len(),
        });
    }
    let mi = mi_profile(values, tau_max, opts.bins)?;
    let tau = estimate_delay(&mi, opts.delay_rule)?;
    let theiler = opts.theiler.unwrap_or(tau);
    let dim = estimate_dim(values, tau, opts.m_max, opts.fnn_epsilon, opts.fnn_threshold, theiler)?;
    let params = PsrParams::new(tau, dim.m)?;
    let wolf = WolfParams {
        evolve_steps: opts.wolf_evolve_steps,
        theiler,
        max_replacement_angle: opts.wolf_max_angle,
        ..WolfParams::for_series(values, tau)
    };
    let lle = wolf_lle(values, params, &wolf)?;
    Ok(ChaosReport {
        tau,
        m: dim.m,
        m_converged: dim.converged,
        lle,
        mi_profile: mi,
        fnn_profile: dim.profile,
        wolf,
        options: opts.clone(),
    })
}
