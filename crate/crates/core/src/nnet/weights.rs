use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::math;
use crate::{Error, Result};

/// Flattening of the compressed local map before `W_l`: row-major over
/// (embedding dimension, phase point).
pub const FLATTEN_ORDER: &str = "row-major(m,N)";

/// Name, shape and position of one learnable tensor in the flat buffer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy)]
enum Init {
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    FanIn(usize),
    Zeros,
    Ones,
}

#[derive(Debug, Clone)]
pub(crate) struct EncoderSlots {
    pub wq: Range<usize>,
    pub wk: Range<usize>,
    pub wv: Range<usize>,
    pub wo: Range<usize>,
    pub ln1_g: Range<usize>,
    pub ln1_b: Range<usize>,
    pub ff_w1: Range<usize>,
    pub ff_b1: Range<usize>,
    pub ff_w2: Range<usize>,
    pub ff_b2: Range<usize>,
    pub ln2_g: Range<usize>,
    pub ln2_b: Range<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct LocalSlots {
    pub conv1_w: Range<usize>,
    pub conv1_b: Range<usize>,
    pub conv3_w: Range<usize>,
    pub conv3_b: Range<usize>,
    pub compress_w: Range<usize>,
    pub compress_b: Range<usize>,
    pub wl: Range<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct HeadSlots {
    pub w1: Range<usize>,
    pub ln1_g: Range<usize>,
    pub ln1_b: Range<usize>,
    pub w2: Range<usize>,
    pub w3: Range<usize>,
    pub ln2_g: Range<usize>,
    pub ln2_b: Range<usize>,
    pub w4: Range<usize>,
    pub b: Range<usize>,
}

/// Where every tensor lives in the flat parameter buffer.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub specs: Vec<TensorSpec>,
    inits: Vec<Init>,
    pub ve_w: Range<usize>,
    pub ve_b: Range<usize>,
    pub enc: Vec<EncoderSlots>,
    pub wg: Range<usize>,
    pub local: Option<LocalSlots>,
    pub head: HeadSlots,
    pub total: usize,
}

struct Builder {
    specs: Vec<TensorSpec>,
    inits: Vec<Init>,
    next: usize,
}

impl Builder {
    fn add(&mut self, name: String, shape: &[usize], init: Init) -> Range<usize> {
        let spec = TensorSpec {
            name,
            shape: shape.to_vec(),
            offset: self.next,
        };
        let range = spec.range();
        self.next = range.end;
        self.specs.push(spec);
        self.inits.push(init);
        range
    }
}

impl Layout {
    /// Tensor order (also the on-disk order):
    /// value embedding; per encoder layer `wq wk wv wo ln1 ffn ln2`; `wg`;
    /// local branch (full variant only); predictor.
    pub fn new(cfg: &ModelConfig) -> Self {
        let (d, f, m, n, p) = (cfg.d_model, cfg.d_ff, cfg.m, cfg.n, cfg.d_pred);
        let w = cfg.feature_width();
        let mut b = Builder {
            specs: Vec::new(),
            inits: Vec::new(),
            next: 0,
        };
        let ve_w = b.add("embed.ve.weight".into(), &[d, m], Init::FanIn(m));
        let ve_b = b.add("embed.ve.bias".into(), &[d], Init::Zeros);
        let mut enc = Vec::with_capacity(cfg.e_layers);
        for l in 0..cfg.e_layers {
            let name = |s: &str| format!("encoder.{l}.{s}");
            enc.push(EncoderSlots {
                wq: b.add(name("attn.wq"), &[d, d], Init::FanIn(d)),
                wk: b.add(name("attn.wk"), &[d, d], Init::FanIn(d)),
                wv: b.add(name("attn.wv"), &[d, d], Init::FanIn(d)),
                wo: b.add(name("attn.wo"), &[d, d], Init::FanIn(d)),
                ln1_g: b.add(name("ln1.gamma"), &[d], Init::Ones),
                ln1_b: b.add(name("ln1.beta"), &[d], Init::Zeros),
                ff_w1: b.add(name("ffn.w1"), &[f, d], Init::FanIn(d)),
                ff_b1: b.add(name("ffn.b1"), &[f], Init::Zeros),
                ff_w2: b.add(name("ffn.w2"), &[d, f], Init::FanIn(f)),
                ff_b2: b.add(name("ffn.b2"), &[d], Init::Zeros),
                ln2_g: b.add(name("ln2.gamma"), &[d], Init::Ones),
                ln2_b: b.add(name("ln2.beta"), &[d], Init::Zeros),
            });
        }
        let wg = b.add("global.wg".into(), &[d, d], Init::FanIn(d));
        let local = cfg.has_local().then(|| LocalSlots {
            conv1_w: b.add("local.conv1x1.weight".into(), &[d, 1, 1, 1], Init::FanIn(1)),
            conv1_b: b.add("local.conv1x1.bias".into(), &[d], Init::Zeros),
            conv3_w: b.add("local.conv3x3.weight".into(), &[d, 1, 3, 3], Init::FanIn(9)),
            conv3_b: b.add("local.conv3x3.bias".into(), &[d], Init::Zeros),
            compress_w: b.add("local.compress.weight".into(), &[1, d, 1, 1], Init::FanIn(d)),
            compress_b: b.add("local.compress.bias".into(), &[1], Init::Zeros),
            wl: b.add("local.wl".into(), &[d, m * n], Init::FanIn(m * n)),
        });
        let head = HeadSlots {
            w1: b.add("head.w1".into(), &[w, w], Init::FanIn(w)),
            ln1_g: b.add("head.ln1.gamma".into(), &[w], Init::Ones),
            ln1_b: b.add("head.ln1.beta".into(), &[w], Init::Zeros),
            w2: b.add("head.w2".into(), &[f, w], Init::FanIn(w)),
            w3: b.add("head.w3".into(), &[w, f], Init::FanIn(f)),
            ln2_g: b.add("head.ln2.gamma".into(), &[w], Init::Ones),
            ln2_b: b.add("head.ln2.beta".into(), &[w], Init::Zeros),
            w4: b.add("head.w4".into(), &[p, w], Init::FanIn(w)),
            b: b.add("head.b".into(), &[p], Init::Zeros),
        };
        Layout {
            total: b.next,
            specs: b.specs,
            inits: b.inits,
            ve_w,
            ve_b,
            enc,
            wg,
            local,
            head,
        }
    }
}

/// Closed-form count of learnable scalars.
pub fn count_params(cfg: &ModelConfig) -> usize {
    let (d, f, m, n, p) = (cfg.d_model, cfg.d_ff, cfg.m, cfg.n, cfg.d_pred);
    let w = cfg.feature_width();
    let embed = d * m + d;
    let layer = 4 * d * d + 2 * d + (f * d + f) + (d * f + d) + 2 * d;
    let global = d * d;
    let local = if cfg.has_local() {
        (d + d) + (9 * d + d) + (d + 1) + d * m * n
    } else {
        0
    };
    let head = w * w + 2 * w + f * w + w * f + 2 * w + p * w + p;
    embed + cfg.e_layers * layer + global + local + head
}

/// All learnable tensors of one model, stored contiguously in the order of
/// [`ModelWeights::specs`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    config: ModelConfig,
    values: Vec<f64>,
}

impl ModelWeights {
    /// Fan-in scaled uniform weights, zero biases, unit norm scales.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0.0; layout.total];
        for (spec, init) in layout.specs.iter().zip(&layout.inits) {
            let slot = &mut values[spec.range()];
            match *init {
                Init::Zeros => {}
                Init::Ones => slot.iter_mut().for_each(|v| *v = 1.0),
                Init::FanIn(fan_in) => {
                    let bound = 1.0 / math::sqrt(fan_in as f64);
                    for v in slot.iter_mut() {
                        let u: f64 = rng.random();
                        *v = (2.0 * u - 1.0) * bound;
                    }
                }
            }
        }
        Ok(Self {
            config: config.clone(),
            values,
        })
    }

    /// All-zero weights (norm scales included).
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            values: vec![0.0; count_params(config)],
        })
    }

    pub fn from_parts(config: ModelConfig, values: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let expected = count_params(&config);
        if values.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "expected {expected} parameters, got {}",
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { index });
        }
        Ok(Self { config, values })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn specs(&self) -> Vec<TensorSpec> {
        Layout::new(&self.config).specs
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(&self.config)
    }

    fn find(&self, name: &str) -> Option<Range<usize>> {
        self.specs().into_iter().find(|s| s.name == name).map(|s| s.range())
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.find(name).map(|r| &self.values[r])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.find(name).map(move |r| &mut self.values[r])
    }
}
