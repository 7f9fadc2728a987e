//! The global/local PSR image forecaster.
//!
//! Inputs are `m x N` trajectory images. The global branch embeds every phase
//! point (value embedding plus sinusoidal positions), runs `e_layers`
//! post-norm Transformer encoder layers and projects the last phase point.
//! The local branch runs parallel 1x1 and 3x3 convolutions with `d_model`
//! channels, a ReLU, a 1x1 channel compression and a linear projection of the
//! flattened map. A two-block residual MLP maps the concatenated features to
//! `d_pred` outputs.
//!
//! Internally sequences are token-major (`N x d_model`, one row per phase
//! point); the public single-operation helpers accept and return the
//! feature-major (`d_model x N`) orientation.

mod layers;
mod model;
mod weights;

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use layers::{positional_encode, LN_EPS};
pub use model::{AttentionCapture, ForwardCache, Model};
pub use weights::{count_params, ModelWeights, TensorSpec, FLATTEN_ORDER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Global and local branches.
    #[default]
    Full,
    /// Global branch only; the predictor input is `d_model` wide.
    NoLocal,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoLocal => "no_local",
        }
    }
}

/// Softmax temperature of the attention scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionScale {
    /// `1 / sqrt(d_model / n_heads)`.
    #[default]
    PerHead,
    /// `1 / sqrt(d_model)` regardless of the head count.
    PaperExact,
}

/// What the attention weights mix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadValues {
    /// Projected values `V_i = W_v^i X`.
    #[default]
    Projected,
    /// The head's slice of the layer input itself (`W_v` is then unused).
    Input,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub d_ff: usize,
    pub e_layers: usize,
    pub n_heads: usize,
    /// Image height (embedding dimension).
    pub m: usize,
    /// Image width (phase points).
    pub n: usize,
    /// Forecast horizon.
    pub d_pred: usize,
    #[serde(default)]
    pub variant: Variant,
    #[serde(default)]
    pub attention_scale: AttentionScale,
    #[serde(default)]
    pub head_values: HeadValues,
}

impl ModelConfig {
    /// `d_ff = 4 * d_model`, full variant.
    pub fn new(d_model: usize, e_layers: usize, n_heads: usize, m: usize, n: usize, d_pred: usize) -> Self {
        Self {
            d_model,
            d_ff: 4 * d_model,
            e_layers,
            n_heads,
            m,
            n,
            d_pred,
            variant: Variant::Full,
            attention_scale: AttentionScale::PerHead,
            head_values: HeadValues::Projected,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("n_heads", self.n_heads),
            ("m", self.m),
            ("n", self.n),
            ("d_pred", self.d_pred),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::InvalidParameter(format!("model {name} must be >= 1")));
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::InvalidParameter(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Width of the predictor input: both branches, or the global one only.
    pub fn feature_width(&self) -> usize {
        match self.variant {
            Variant::Full => 2 * self.d_model,
            Variant::NoLocal => self.d_model,
        }
    }

    pub fn has_local(&self) -> bool {
        self.variant == Variant::Full
    }
}
