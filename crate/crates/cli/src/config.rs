//! Run configuration: one TOML file, sections mirror the pipeline stages.

use std::fs;
use std::path::{Path, PathBuf};

use psrcast_core::chaos::{AnalysisOptions, PsrParams};
use psrcast_core::evaluation::ExperimentGrid;
use psrcast_core::nnet::{AttentionScale, HeadValues, ModelConfig, Variant};
use psrcast_core::series::SplitSpec;
use psrcast_core::synth::SynthSpec;
use psrcast_core::training::{TrainConfig, DEFAULT_SEEDS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::csv_io::{ColumnRef, CsvOptions, MissingPolicy};
use crate::error::{CliError, CliResult};

/// Largest delay searched in auto mode.
pub const AUTO_TAU_CAP: usize = 200;
pub const AUTO_M_MAX: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// CSV file; when absent the series is generated from `[synth]`.
    pub path: Option<PathBuf>,
    pub column: ColumnRef,
    pub has_header: bool,
    pub delimiter: char,
    pub missing: MissingPolicy,
    pub step_minutes: f64,
    pub split: SplitSpec,
}

impl Default for DataSection {
    fn default() -> Self {
        let csv = CsvOptions::default();
        Self {
            path: None,
            column: csv.column,
            has_header: csv.has_header,
            delimiter: csv.delimiter,
            missing: csv.missing,
            step_minutes: csv.step_minutes,
            split: SplitSpec::default(),
        }
    }
}

impl DataSection {
    pub fn csv_options(&self) -> CsvOptions {
        CsvOptions {
            column: self.column.clone(),
            has_header: self.has_header,
            delimiter: self.delimiter,
            missing: self.missing,
            step_minutes: self.step_minutes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsrMode {
    #[default]
    Auto,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsrSection {
    pub mode: PsrMode,
    pub tau: Option<usize>,
    pub m: Option<usize>,
    pub analysis: AnalysisOptions,
}

impl Default for PsrSection {
    fn default() -> Self {
        Self {
            mode: PsrMode::Auto,
            tau: None,
            m: None,
            analysis: AnalysisOptions::default(),
        }
    }
}

impl PsrSection {
    /// Analysis options used by auto mode for a given look-back.
    pub fn auto_options(&self, lookback: usize) -> AnalysisOptions {
        AnalysisOptions {
            tau_max: self.analysis.tau_max.min(AUTO_TAU_CAP).min((lookback / 4).max(1)),
            m_max: self.analysis.m_max.min(AUTO_M_MAX),
            ..self.analysis.clone()
        }
    }

    pub fn fixed(&self) -> Option<PsrParams> {
        match (self.mode, self.tau, self.m) {
            (PsrMode::Fixed, Some(tau), Some(m)) => Some(PsrParams { tau, m }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d_model: usize,
    pub d_ff: usize,
    pub e_layers: usize,
    pub n_heads: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub variant: Variant,
    pub attention_scale: AttentionScale,
    pub head_values: HeadValues,
    /// Step between consecutive training windows.
    pub stride: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            d_model: 64,
            d_ff: 256,
            e_layers: 2,
            n_heads: 4,
            lookback: 192,
            horizon: 96,
            variant: Variant::Full,
            attention_scale: AttentionScale::PerHead,
            head_values: HeadValues::Projected,
            stride: 1,
        }
    }
}

impl ModelSection {
    pub fn model_config(&self, params: PsrParams) -> CliResult<ModelConfig> {
        let n = params.points(self.lookback).ok_or_else(|| {
            CliError::Config(format!(
                "model.lookback: {} is shorter than the embedding span {} (tau {}, m {})",
                self.lookback,
                params.span(),
                params.tau,
                params.m
            ))
        })?;
        let cfg = ModelConfig {
            d_model: self.d_model,
            d_ff: self.d_ff,
            e_layers: self.e_layers,
            n_heads: self.n_heads,
            m: params.m,
            n,
            d_pred: self.horizon,
            variant: self.variant,
            attention_scale: self.attention_scale,
            head_values: self.head_values,
        };
        cfg.validate().map_err(|e| CliError::Config(format!("model: {e}")))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub clip_norm: Option<f64>,
    pub seeds: Vec<u64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            learning_rate: t.learning_rate,
            patience: t.patience,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            adam_eps: t.adam_eps,
            clip_norm: t.clip_norm,
            seeds: DEFAULT_SEEDS.to_vec(),
        }
    }
}

impl TrainSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            learning_rate: self.learning_rate,
            patience: self.patience,
            seed,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
            clip_norm: self.clip_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub grid: ExperimentGrid,
    /// Period of the seasonal-naive baseline, in samples.
    pub season: usize,
    pub ridge_lambda: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            grid: ExperimentGrid::default(),
            season: 96,
            ridge_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out: PathBuf,
    pub data: DataSection,
    pub psr: PsrSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub synth: SynthSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("runs/latest"),
            data: DataSection::default(),
            psr: PsrSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
            synth: SynthSpec::default(),
        }
    }
}

fn bad(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| bad(&path.display().to_string(), e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Reads the snapshot written into a run directory.
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config.json: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every section; the first problem is reported with its field path.
    pub fn validate(&self) -> CliResult<()> {
        let d = &self.data;
        if !d.delimiter.is_ascii() {
            return Err(bad("data.delimiter", "must be a single ASCII character"));
        }
        if !(d.step_minutes > 0.0 && d.step_minutes.is_finite()) {
            return Err(bad("data.step_minutes", "must be positive"));
        }
        d.split.validate().map_err(|e| bad("data.split", e))?;

        let p = &self.psr;
        if p.mode == PsrMode::Fixed {
            match (p.tau, p.m) {
                (Some(tau), Some(m)) => {
                    PsrParams::new(tau, m).map_err(|e| bad("psr", e))?;
                }
                _ => return Err(bad("psr", "fixed mode needs both tau and m")),
            }
        }
        if p.analysis.bins < 2 {
            return Err(bad("psr.analysis.bins", "must be >= 2"));
        }
        if p.analysis.m_max == 0 || p.analysis.tau_max == 0 {
            return Err(bad("psr.analysis", "tau_max and m_max must be >= 1"));
        }

        let m = &self.model;
        for (name, v) in [
            ("model.d_model", m.d_model),
            ("model.d_ff", m.d_ff),
            ("model.e_layers", m.e_layers),
            ("model.n_heads", m.n_heads),
            ("model.lookback", m.lookback),
            ("model.horizon", m.horizon),
            ("model.stride", m.stride),
        ] {
            if v == 0 {
                return Err(bad(name, "must be >= 1"));
            }
        }
        if !m.d_model.is_multiple_of(m.n_heads) {
            return Err(bad("model.n_heads", format!("must divide d_model {}", m.d_model)));
        }
        if m.lookback < 4 {
            return Err(bad("model.lookback", "must be >= 4"));
        }

        self.train
            .train_config(0)
            .validate()
            .map_err(|e| bad("train", e))?;
        if self.train.seeds.is_empty() {
            return Err(bad("train.seeds", "needs at least one seed"));
        }

        self.eval.grid.validate().map_err(|e| bad("eval.grid", e))?;
        if self.eval.season == 0 {
            return Err(bad("eval.season", "must be >= 1"));
        }
        let shortest = self.eval.grid.lookbacks.iter().copied().chain([m.lookback]).min().unwrap_or(0);
        if self.eval.season > shortest {
            return Err(bad(
                "eval.season",
                format!("{} exceeds the shortest look-back {shortest}", self.eval.season),
            ));
        }
        if !(self.eval.ridge_lambda >= 0.0 && self.eval.ridge_lambda.is_finite()) {
            return Err(bad("eval.ridge_lambda", "must be finite and >= 0"));
        }
        if d.path.is_none() {
            self.synth.validate().map_err(|e| bad("synth", e))?;
        }
        Ok(())
    }

    /// SHA-256 over the resolved config (output location excluded) and the crate version.
    pub fn fingerprint(&self) -> String {
        let placed = RunConfig {
            out: PathBuf::new(),
            ..self.clone()
        };
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&placed).expect("config serializes"));
        h.update(env!("CARGO_PKG_VERSION").as_bytes());
        hex::encode(h.finalize())
    }
}
