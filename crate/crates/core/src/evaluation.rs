//! Error metrics, reference baselines and the experiment grid.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::chaos::PsrParams;
use crate::embedding::{build_windows, WindowPair};
use crate::math;
use crate::nnet::{Model, ModelConfig, Variant};
use crate::series::{split, NormStats, SplitSpec, TimeSeries};
use crate::training::{multi_seed_run, TrainConfig};
use crate::{Error, Result};

fn check_lengths(truth: &[f64], pred: &[f64]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::EmptyDataset("metric input"));
    }
    Ok(())
}

pub fn mae(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_lengths(truth, pred)?;
    let sum: f64 = truth.iter().zip(pred).map(|(t, p)| math::abs(t - p)).sum();
    Ok(sum / truth.len() as f64)
}

/// Mean absolute percentage error as a fraction (0.0164, not 1.64).
pub fn mape(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_lengths(truth, pred)?;
    let mut sum = 0.0;
    for (index, (t, p)) in truth.iter().zip(pred).enumerate() {
        if *t == 0.0 {
            return Err(Error::ZeroTruthValue { index });
        }
        sum += math::abs(t - p) / math::abs(*t);
    }
    Ok(sum / truth.len() as f64)
}

pub fn persistence_forecast(window: &[f64], horizon: usize) -> Result<Vec<f64>> {
    let last = *window.last().ok_or(Error::WindowTooShort { needed: 1, got: 0 })?;
    Ok(vec![last; horizon])
}

/// Repeats the last `period` samples of the window cyclically.
pub fn seasonal_naive_forecast(window: &[f64], horizon: usize, period: usize) -> Result<Vec<f64>> {
    if period == 0 {
        return Err(Error::InvalidParameter("period must be >= 1".into()));
    }
    if window.len() < period {
        return Err(Error::WindowTooShort {
            needed: period,
            got: window.len(),
        });
    }
    let tail = &window[window.len() - period..];
    Ok((0..horizon).map(|i| tail[i % period]).collect())
}

/// Cholesky solve of `a x = b` for symmetric positive definite `a` (n x n)
/// and `k` right-hand sides stored row-major `n x k`; `b` is overwritten.
fn cholesky_solve(a: &mut [f64], n: usize, b: &mut [f64], k: usize) -> Result<()> {
    let scale = (0..n).map(|i| math::abs(a[i * n + i])).fold(0.0, f64::max);
    let floor = scale * 1e-13;
    for j in 0..n {
        let mut d = a[j * n + j];
        for p in 0..j {
            d -= a[j * n + p] * a[j * n + p];
        }
        if !(d > floor) {
            return Err(Error::SingularSystem);
        }
        let d = math::sqrt(d);
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for p in 0..j {
                s -= a[i * n + p] * a[j * n + p];
            }
            a[i * n + j] = s / d;
        }
    }
    for c in 0..k {
        for i in 0..n {
            let mut s = b[i * k + c];
            for p in 0..i {
                s -= a[i * n + p] * b[p * k + c];
            }
            b[i * k + c] = s / a[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i * k + c];
            for p in i + 1..n {
                s -= a[p * n + i] * b[p * k + c];
            }
            b[i * k + c] = s / a[i * n + i];
        }
    }
    Ok(())
}

/// One ridge regression per horizon step on the raw look-back window plus an
/// unpenalised intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBaseline {
    pub lookback: usize,
    pub horizon: usize,
    pub lambda: f64,
    /// `(lookback + 1) x horizon`, row-major; the last row is the intercept.
    pub coef: Vec<f64>,
}

impl LinearBaseline {
    pub fn fit(inputs: &[&[f64]], targets: &[&[f64]], lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("ridge lambda must be >= 0, got {lambda}")));
        }
        if inputs.len() != targets.len() {
            return Err(Error::LengthMismatch {
                left: inputs.len(),
                right: targets.len(),
            });
        }
        let first = inputs.first().ok_or(Error::EmptyDataset("ridge inputs"))?;
        let (l, h) = (first.len(), targets[0].len());
        let f = l + 1;
        let mut xtx = vec![0.0; f * f];
        let mut xty = vec![0.0; f * h];
        let mut row = vec![1.0; f];
        for (x, y) in inputs.iter().zip(targets) {
            if x.len() != l || y.len() != h {
                return Err(Error::ShapeMismatch("ragged ridge inputs".into()));
            }
            row[..l].copy_from_slice(x);
            for i in 0..f {
                let ri = row[i];
                for j in 0..=i {
                    xtx[i * f + j] += ri * row[j];
                }
                for (c, yc) in y.iter().enumerate() {
                    xty[i * h + c] += ri * yc;
                }
            }
        }
        for i in 0..f {
            for j in 0..i {
                xtx[j * f + i] = xtx[i * f + j];
            }
        }
        for i in 0..l {
            xtx[i * f + i] += lambda;
        }
        cholesky_solve(&mut xtx, f, &mut xty, h)?;
        Ok(Self {
            lookback: l,
            horizon: h,
            lambda,
            coef: xty,
        })
    }

    /// Fits on every sliding window of `values`.
    pub fn fit_series(values: &[f64], lookback: usize, horizon: usize, lambda: f64) -> Result<Self> {
        if values.len() < lookback + horizon || lookback == 0 || horizon == 0 {
            return Err(Error::SeriesTooShort {
                needed: lookback + horizon,
                got: values.len(),
            });
        }
        let count = values.len() - lookback - horizon + 1;
        let inputs: Vec<&[f64]> = (0..count).map(|s| &values[s..s + lookback]).collect();
        let targets: Vec<&[f64]> = (0..count)
            .map(|s| &values[s + lookback..s + lookback + horizon])
            .collect();
        Self::fit(&inputs, &targets, lambda)
    }

    pub fn forecast(&self, window: &[f64]) -> Result<Vec<f64>> {
        if window.len() != self.lookback {
            return Err(Error::LengthMismatch {
                left: window.len(),
                right: self.lookback,
            });
        }
        let h = self.horizon;
        let mut out = self.coef[self.lookback * h..].to_vec();
        for (i, x) in window.iter().enumerate() {
            for c in 0..h {
                out[c] += x * self.coef[i * h + c];
            }
        }
        Ok(out)
    }
}

/// MAE, MAPE and per-step MAE over a set of forecast windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub mape: f64,
    pub per_step_mae: Vec<f64>,
}

impl Metrics {
    pub fn compute(truth: &[Vec<f64>], pred: &[Vec<f64>]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::LengthMismatch {
                left: truth.len(),
                right: pred.len(),
            });
        }
        let h = truth.first().ok_or(Error::EmptyDataset("forecast windows"))?.len();
        let mut per_step = vec![0.0; h];
        let mut flat_t = Vec::with_capacity(truth.len() * h);
        let mut flat_p = Vec::with_capacity(truth.len() * h);
        for (t, p) in truth.iter().zip(pred) {
            check_lengths(t, p)?;
            if t.len() != h {
                return Err(Error::LengthMismatch { left: t.len(), right: h });
            }
            for k in 0..h {
                per_step[k] += math::abs(t[k] - p[k]);
            }
            flat_t.extend_from_slice(t);
            flat_p.extend_from_slice(p);
        }
        per_step.iter_mut().for_each(|v| *v /= truth.len() as f64);
        Ok(Self {
            mae: mae(&flat_t, &flat_p)?,
            mape: mape(&flat_t, &flat_p)?,
            per_step_mae: per_step,
        })
    }
}

/// Test windows in original units: each look-back window with its truth.
#[derive(Debug, Clone)]
pub struct EvalWindows {
    pub windows: Vec<Vec<f64>>,
    pub truth: Vec<Vec<f64>>,
}

impl EvalWindows {
    /// Sliding windows (stride 1) over `segment`.
    pub fn sliding(segment: &[f64], lookback: usize, horizon: usize) -> Result<Self> {
        if segment.len() < lookback + horizon {
            return Err(Error::SeriesTooShort {
                needed: lookback + horizon,
                got: segment.len(),
            });
        }
        let count = segment.len() - lookback - horizon + 1;
        Ok(Self {
            windows: (0..count).map(|s| segment[s..s + lookback].to_vec()).collect(),
            truth: (0..count)
                .map(|s| segment[s + lookback..s + lookback + horizon].to_vec())
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn score(&self, mut forecast: impl FnMut(&[f64]) -> Result<Vec<f64>>) -> Result<Metrics> {
        let pred = self
            .windows
            .iter()
            .map(|w| forecast(w))
            .collect::<Result<Vec<_>>>()?;
        Metrics::compute(&self.truth, &pred)
    }
}

/// Scores `model` on normalised pairs, denormalising both prediction and truth.
pub fn evaluate_model(model: &Model, pairs: &[WindowPair], stats: &NormStats) -> Result<Metrics> {
    let mut truth = Vec::with_capacity(pairs.len());
    let mut pred = Vec::with_capacity(pairs.len());
    for p in pairs {
        pred.push(stats.invert(&model.forward(&p.image)?));
        truth.push(stats.invert(&p.target));
    }
    Metrics::compute(&truth, &pred)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineMetrics {
    pub name: String,
    pub mae: f64,
    pub mape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub model: String,
    pub lookback: usize,
    pub horizon: usize,
    pub tau: usize,
    pub m: usize,
    pub seed: u64,
    pub mae: f64,
    pub mape: f64,
    pub per_step_mae: Vec<f64>,
    pub baselines: Vec<BaselineMetrics>,
    /// True for the lowest test MAE among the seeds of one grid cell.
    pub best_of_seeds: bool,
    pub epochs: usize,
    pub fingerprint: String,
    pub wall_clock_seconds: f64,
}

/// Reference forecasts for one set of test windows.
pub fn baseline_metrics(
    train_values: &[f64],
    test: &EvalWindows,
    lookback: usize,
    horizon: usize,
    period: usize,
    lambda: f64,
) -> Result<Vec<BaselineMetrics>> {
    let mut out = Vec::new();
    let p = test.score(|w| persistence_forecast(w, horizon))?;
    out.push(BaselineMetrics {
        name: "persistence".into(),
        mae: p.mae,
        mape: p.mape,
    });
    let s = test.score(|w| seasonal_naive_forecast(w, horizon, period))?;
    out.push(BaselineMetrics {
        name: "seasonal_naive".into(),
        mae: s.mae,
        mape: s.mape,
    });
    let lin = LinearBaseline::fit_series(train_values, lookback, horizon, lambda)?;
    let l = test.score(|w| lin.forecast(w))?;
    out.push(BaselineMetrics {
        name: "linear".into(),
        mae: l.mae,
        mape: l.mape,
    });
    Ok(out)
}

/// Cells of an experiment sweep; every combination is run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentGrid {
    pub lookbacks: Vec<usize>,
    pub horizons: Vec<usize>,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        Self {
            lookbacks: vec![96, 192, 336, 672],
            horizons: vec![12, 24, 48, 96],
            seeds: crate::training::DEFAULT_SEEDS.to_vec(),
            variants: vec![Variant::Full],
        }
    }
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.lookbacks.is_empty() || self.horizons.is_empty() || self.seeds.is_empty() || self.variants.is_empty() {
            return Err(Error::InvalidParameter("every grid axis needs at least one value".into()));
        }
        if self.lookbacks.contains(&0) || self.horizons.contains(&0) {
            return Err(Error::InvalidParameter("grid lengths must be >= 1".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.lookbacks.len() * self.horizons.len() * self.variants.len()
    }
}

/// Everything but the grid axes.
#[derive(Debug, Clone)]
pub struct ExperimentSetup<'a> {
    pub series: &'a TimeSeries,
    pub split: SplitSpec,
    /// `d_model`, `d_ff`, `e_layers`, `n_heads` and the attention options are
    /// taken from here; `m`, `n`, `d_pred` and `variant` follow each cell.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub stride: usize,
    pub season: usize,
    pub ridge_lambda: f64,
    pub fingerprint: String,
}

/// Trains and scores every grid cell. `psr_for(lookback)` supplies the delay
/// embedding of each look-back length.
pub fn run_experiment(
    setup: &ExperimentSetup<'_>,
    grid: &ExperimentGrid,
    mut psr_for: impl FnMut(usize) -> Result<PsrParams>,
    clock: &dyn crate::training::Clock,
) -> Result<Vec<EvalReport>> {
    grid.validate()?;
    let (train_ts, val_ts, test_ts) = split(setup.series, &setup.split)?;
    let stats = NormStats::fit(train_ts.values())?;
    let (ztr, zva, zte) = (
        stats.apply(train_ts.values()),
        stats.apply(val_ts.values()),
        stats.apply(test_ts.values()),
    );
    let mut reports = Vec::new();
    for &lookback in &grid.lookbacks {
        let params = psr_for(lookback)?;
        let n = params.points(lookback).ok_or(Error::WindowTooShort {
            needed: params.span(),
            got: lookback,
        })?;
        for &horizon in &grid.horizons {
            let train_pairs = build_windows(&ztr, lookback, horizon, params, setup.stride)?;
            let val_pairs = build_windows(&zva, lookback, horizon, params, 1)?;
            let test_pairs = build_windows(&zte, lookback, horizon, params, 1)?;
            let test_windows = EvalWindows::sliding(test_ts.values(), lookback, horizon)?;
            let baselines = baseline_metrics(
                train_ts.values(),
                &test_windows,
                lookback,
                horizon,
                setup.season,
                setup.ridge_lambda,
            )?;
            for &variant in &grid.variants {
                let cfg = ModelConfig {
                    m: params.m,
                    n,
                    d_pred: horizon,
                    variant,
                    ..setup.model.clone()
                };
                let started = clock.now();
                let mut metrics = Vec::new();
                let run = multi_seed_run(&grid.seeds, &train_pairs, &val_pairs, &cfg, &setup.train, |model| {
                    let m = evaluate_model(model, &test_pairs, &stats)?;
                    let mae = m.mae;
                    metrics.push(m);
                    Ok(mae)
                })?;
                let elapsed = clock.now() - started;
                for (i, (r, m)) in run.runs.iter().zip(metrics).enumerate() {
                    reports.push(EvalReport {
                        dataset: setup.series.name().to_string(),
                        model: variant.as_str().to_string(),
                        lookback,
                        horizon,
                        tau: params.tau,
                        m: params.m,
                        seed: r.seed,
                        mae: m.mae,
                        mape: m.mape,
                        per_step_mae: m.per_step_mae,
                        baselines: baselines.clone(),
                        best_of_seeds: i == run.best,
                        epochs: r.history.epochs(),
                        fingerprint: setup.fingerprint.clone(),
                        wall_clock_seconds: elapsed / run.runs.len() as f64,
                    });
                }
            }
        }
    }
    Ok(reports)
}

/// Best-of-seeds results laid out like the paper's comparison tables: one row
/// per (look-back, horizon), MAE and MAPE columns per model and baseline.
pub fn render_results_table(reports: &[EvalReport]) -> String {
    let mut models: Vec<String> = Vec::new();
    let mut baselines: Vec<String> = Vec::new();
    let mut keys: Vec<(usize, usize)> = Vec::new();
    for r in reports {
        if !models.contains(&r.model) {
            models.push(r.model.clone());
        }
        for b in &r.baselines {
            if !baselines.contains(&b.name) {
                baselines.push(b.name.clone());
            }
        }
        if !keys.contains(&(r.lookback, r.horizon)) {
            keys.push((r.lookback, r.horizon));
        }
    }
    let mut out = String::from("lookback,horizon");
    for name in models.iter().chain(&baselines) {
        let _ = write!(out, ",{name}_mae,{name}_mape");
    }
    out.push('\n');
    for (l, h) in keys {
        let _ = write!(out, "{l},{h}");
        let cell: Vec<&EvalReport> = reports.iter().filter(|r| r.lookback == l && r.horizon == h).collect();
        for name in &models {
            let best = cell
                .iter()
                .filter(|r| &r.model == name)
                .min_by(|a, b| a.mae.total_cmp(&b.mae));
            match best {
                Some(r) => {
                    let _ = write!(out, ",{:.4},{:.4}", r.mae, r.mape);
                }
                None => out.push_str(",,"),
            }
        }
        for name in &baselines {
            let b = cell.iter().flat_map(|r| r.baselines.iter()).find(|b| &b.name == name);
            match b {
                Some(b) => {
                    let _ = write!(out, ",{:.4},{:.4}", b.mae, b.mape);
                }
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}
