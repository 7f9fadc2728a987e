//! Mini-batch Adam training with early stopping on validation MSE.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::WindowPair;
use crate::math;
use crate::nnet::{Model, ModelConfig, ModelWeights};
use crate::{Error, Result};

/// Seeds of the best-of-five protocol.
pub const DEFAULT_SEEDS: [u64; 5] = [2020, 2021, 2022, 2023, 2024];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    /// Consecutive non-improving epochs tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm cap; off by default.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            max_epochs: 10,
            learning_rate: 1e-4,
            patience: 3,
            seed: DEFAULT_SEEDS[0],
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::InvalidParameter("adam betas must lie in [0, 1)".into()));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::InvalidParameter("adam_eps must be positive".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::InvalidParameter("clip_norm must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Per-epoch record of a training run. Epochs are indexed from 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Wall-clock seconds spent in each epoch.
    pub seconds: Vec<f64>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.val_loss.len()
    }

    pub fn best_val_loss(&self) -> f64 {
        self.val_loss[self.best_epoch]
    }
}

/// Source of wall-clock time, in seconds from an arbitrary origin.
pub trait Clock {
    fn now(&self) -> f64;
}

/// Always reads zero; used where no clock is available.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullClock;

impl Clock for NullClock {
    fn now(&self) -> f64 {
        0.0
    }
}

#[cfg(feature = "std")]
#[derive(Debug, Clone, Copy)]
pub struct SystemClock(std::time::Instant);

#[cfg(feature = "std")]
impl Default for SystemClock {
    fn default() -> Self {
        Self(std::time::Instant::now())
    }
}

#[cfg(feature = "std")]
impl Clock for SystemClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: target.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::EmptyDataset("mse input"));
    }
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.len() as f64)
}

/// Mean per-sample MSE of `model` over `pairs`.
pub fn dataset_loss(model: &Model, pairs: &[WindowPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("pairs"));
    }
    let mut total = 0.0;
    for pair in pairs {
        total += mse_loss(&model.forward(&pair.image)?, &pair.target)?;
    }
    Ok(total / pairs.len() as f64)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - math::pow(b1, self.t as f64);
        let c2 = 1.0 - math::pow(b2, self.t as f64);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= cfg.learning_rate * mhat / (math::sqrt(vhat) + cfg.adam_eps);
        }
    }
}

fn check_pairs(pairs: &[WindowPair], cfg: &ModelConfig, what: &'static str) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset(what));
    }
    for p in pairs {
        if p.image.m() != cfg.m || p.image.n() != cfg.n || p.target.len() != cfg.d_pred {
            return Err(Error::ShapeMismatch(format!(
                "{what} pair at {} is {}x{} -> {}, model expects {}x{} -> {}",
                p.window_start,
                p.image.m(),
                p.image.n(),
                p.target.len(),
                cfg.m,
                cfg.n,
                cfg.d_pred
            )));
        }
    }
    Ok(())
}

/// Summed per-sample gradients and losses of one batch. Each sample's
/// gradient is formed separately and added in batch order, so the result does
/// not depend on whether samples run in parallel.
fn batch_gradient(model: &Model, batch: &[&WindowPair], grad: &mut [f64]) -> Result<f64> {
    grad.iter_mut().for_each(|g| *g = 0.0);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let parts: Vec<Result<(f64, Vec<f64>)>> = batch
            .par_iter()
            .map(|pair| {
                let mut g = vec![0.0; grad.len()];
                let loss = model.loss_and_grad(&pair.image, &pair.target, &mut g)?;
                Ok((loss, g))
            })
            .collect();
        let mut total = 0.0;
        for part in parts {
            let (loss, g) = part?;
            total += loss;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        Ok(total)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut scratch = vec![0.0; grad.len()];
        let mut total = 0.0;
        for pair in batch {
            scratch.iter_mut().for_each(|g| *g = 0.0);
            total += model.loss_and_grad(&pair.image, &pair.target, &mut scratch)?;
            grad.iter_mut().zip(&scratch).for_each(|(a, b)| *a += b);
        }
        Ok(total)
    }
}

/// Trains from weights initialised with `train_cfg.seed`.
pub fn train(
    train_pairs: &[WindowPair],
    val_pairs: &[WindowPair],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<(ModelWeights, TrainHistory)> {
    let init = ModelWeights::init(model_cfg, train_cfg.seed)?;
    #[cfg(feature = "std")]
    let clock = SystemClock::default();
    #[cfg(not(feature = "std"))]
    let clock = NullClock;
    train_from(init, train_pairs, val_pairs, train_cfg, &clock)
}

/// Trains starting from `init`. The returned weights are those of the epoch
/// with the lowest validation loss.
pub fn train_from(
    init: ModelWeights,
    train_pairs: &[WindowPair],
    val_pairs: &[WindowPair],
    cfg: &TrainConfig,
    clock: &dyn Clock,
) -> Result<(ModelWeights, TrainHistory)> {
    cfg.validate()?;
    let model_cfg = init.config().clone();
    check_pairs(train_pairs, &model_cfg, "training")?;
    check_pairs(val_pairs, &model_cfg, "validation")?;

    let mut model = Model::new(init)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    let mut adam = Adam::new(model.num_params());
    let mut grad = vec![0.0; model.num_params()];

    let mut history = TrainHistory {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        seconds: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
    };
    let mut best: Option<ModelWeights> = None;
    let mut stale = 0usize;

    for epoch in 0..cfg.max_epochs {
        let started = clock.now();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&WindowPair> = chunk.iter().map(|&i| &train_pairs[i]).collect();
            let loss = match batch_gradient(&model, &batch, &mut grad) {
                Ok(l) if l.is_finite() => l,
                Ok(_) | Err(Error::NonFiniteActivation(_)) => {
                    let starts: Vec<usize> = batch.iter().map(|p| p.window_start).collect();
                    log::error!("non-finite loss, epoch {epoch} batch {b}, window starts {starts:?}");
                    return Err(Error::NonFiniteLoss { epoch, batch: b });
                }
                Err(e) => return Err(e),
            };
            epoch_loss += loss;
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            if let Some(cap) = cfg.clip_norm {
                let norm = math::sqrt(grad.iter().map(|g| g * g).sum());
                if norm > cap {
                    let s = cap / norm;
                    grad.iter_mut().for_each(|g| *g *= s);
                }
            }
            adam.step(model.weights_mut().values_mut(), &grad, cfg);
        }
        let train_loss = epoch_loss / train_pairs.len() as f64;
        let val_loss = match dataset_loss(&model, val_pairs) {
            Ok(v) if v.is_finite() => v,
            Ok(_) | Err(Error::NonFiniteActivation(_)) => {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: usize::MAX,
                })
            }
            Err(e) => return Err(e),
        };
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        history.seconds.push(clock.now() - started);
        log::info!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");

        if best.is_none() || val_loss < history.val_loss[history.best_epoch] {
            history.best_epoch = epoch;
            best = Some(model.weights().clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    let weights = best.unwrap_or_else(|| model.into_weights());
    Ok((weights, history))
}

/// One seed of a multi-seed run.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub weights: ModelWeights,
    pub history: TrainHistory,
    pub test_mae: f64,
}

#[derive(Debug, Clone)]
pub struct MultiSeedReport {
    pub runs: Vec<SeedRun>,
    /// Index into `runs` of the lowest test MAE.
    pub best: usize,
    pub mean_mae: f64,
    /// Population standard deviation of the test MAE across seeds.
    pub std_mae: f64,
}

impl MultiSeedReport {
    pub fn best_run(&self) -> &SeedRun {
        &self.runs[self.best]
    }
}

/// Trains once per seed and scores each run with `score` (test MAE).
pub fn multi_seed_run(
    seeds: &[u64],
    train_pairs: &[WindowPair],
    val_pairs: &[WindowPair],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    mut score: impl FnMut(&Model) -> Result<f64>,
) -> Result<MultiSeedReport> {
    if seeds.is_empty() {
        return Err(Error::InvalidParameter("at least one seed is required".into()));
    }
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let cfg = TrainConfig {
            seed,
            ..train_cfg.clone()
        };
        let (weights, history) = train(train_pairs, val_pairs, model_cfg, &cfg)?;
        let model = Model::new(weights)?;
        let test_mae = score(&model)?;
        runs.push(SeedRun {
            seed,
            weights: model.into_weights(),
            history,
            test_mae,
        });
    }
    let maes: Vec<f64> = runs.iter().map(|r| r.test_mae).collect();
    let best = maes
        .iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v < maes[b] { i } else { b });
    let mean_mae = maes.iter().sum::<f64>() / maes.len() as f64;
    let std_mae = math::sqrt(maes.iter().map(|v| (v - mean_mae) * (v - mean_mae)).sum::<f64>() / maes.len() as f64);
    Ok(MultiSeedReport {
        runs,
        best,
        mean_mae,
        std_mae,
    })
}
