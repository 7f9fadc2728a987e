//! Synthetic load-like series: daily and weekly sinusoids, a chaotic
//! component and Gaussian noise.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::series::TimeSeries;
use crate::{Error, Result};

pub const DAILY_PERIOD: usize = 96;
pub const WEEKLY_PERIOD: usize = 672;

const TRANSIENT_STEPS: usize = 10_000;
const LORENZ_DT: f64 = 0.01;
const MG_DT: f64 = 0.1;
const MG_DELAY: f64 = 17.0;
/// Integration steps per Mackey-Glass sample (one time unit).
const MG_SUBSTEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChaosSource {
    #[default]
    LorenzX,
    MackeyGlass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub length: usize,
    pub base: f64,
    pub daily_amp: f64,
    pub weekly_amp: f64,
    pub chaos_amp: f64,
    pub chaos_source: ChaosSource,
    pub noise_std: f64,
    pub seed: u64,
    pub step_minutes: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            length: 10_000,
            base: 1000.0,
            daily_amp: 300.0,
            weekly_amp: 100.0,
            chaos_amp: 200.0,
            chaos_source: ChaosSource::LorenzX,
            noise_std: 10.0,
            seed: 2020,
            step_minutes: 15.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::InvalidSpec("length must be >= 1".into()));
        }
        let parts = [
            ("base", self.base),
            ("daily_amp", self.daily_amp),
            ("weekly_amp", self.weekly_amp),
            ("chaos_amp", self.chaos_amp),
            ("noise_std", self.noise_std),
        ];
        for (name, v) in parts {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidSpec(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.step_minutes > 0.0 && self.step_minutes.is_finite()) {
            return Err(Error::InvalidSpec("step_minutes must be positive".into()));
        }
        let bound = self.daily_amp + self.weekly_amp + self.chaos_amp + 6.0 * self.noise_std;
        if self.base <= bound {
            return Err(Error::InvalidSpec(format!(
                "base {} must exceed daily + weekly + chaos amplitudes + 6 noise_std = {bound}",
                self.base
            )));
        }
        Ok(())
    }
}

/// Standard normal draw truncated to `[-6, 6]`.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        if u1 <= 0.0 {
            continue;
        }
        let z = math::sqrt(-2.0 * math::ln(u1)) * math::cos(2.0 * PI * u2);
        if z.abs() <= 6.0 {
            return z;
        }
    }
}

fn lorenz_rhs(s: [f64; 3]) -> [f64; 3] {
    let (sigma, rho, beta) = (10.0, 28.0, 8.0 / 3.0);
    [sigma * (s[1] - s[0]), s[0] * (rho - s[2]) - s[1], s[0] * s[1] - beta * s[2]]
}

fn lorenz_step(s: [f64; 3], dt: f64) -> [f64; 3] {
    let add = |a: [f64; 3], b: [f64; 3], h: f64| [a[0] + h * b[0], a[1] + h * b[1], a[2] + h * b[2]];
    let k1 = lorenz_rhs(s);
    let k2 = lorenz_rhs(add(s, k1, dt / 2.0));
    let k3 = lorenz_rhs(add(s, k2, dt / 2.0));
    let k4 = lorenz_rhs(add(s, k3, dt));
    let mut out = s;
    for i in 0..3 {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Full Lorenz state (σ=10, ρ=28, β=8/3) sampled every `dt` after the
/// transient, RK4 integration.
pub fn lorenz(len: usize, dt: f64, init: [f64; 3]) -> Vec<[f64; 3]> {
    let mut s = init;
    for _ in 0..TRANSIENT_STEPS {
        s = lorenz_step(s, dt);
    }
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(s);
        s = lorenz_step(s, dt);
    }
    out
}

fn mg_rhs(x: f64, delayed: f64) -> f64 {
    0.2 * delayed / (1.0 + math::pow(delayed, 10.0)) - 0.1 * x
}

/// Mackey-Glass (τ=17) sampled once per time unit, RK4 at dt=0.1 with the
/// delayed term linearly interpolated at half steps.
pub fn mackey_glass(len: usize, x0: f64) -> Vec<f64> {
    let lag = (MG_DELAY / MG_DT) as usize;
    let total = TRANSIENT_STEPS + len * MG_SUBSTEPS;
    let mut hist: Vec<f64> = alloc::vec![x0; lag + 1];
    let mut x = x0;
    let mut out = Vec::with_capacity(len);
    for step in 0..total {
        let i = hist.len() - 1;
        let d0 = hist[i - lag];
        let d1 = hist[i - lag + 1];
        let dm = 0.5 * (d0 + d1);
        let k1 = mg_rhs(x, d0);
        let k2 = mg_rhs(x + MG_DT / 2.0 * k1, dm);
        let k3 = mg_rhs(x + MG_DT / 2.0 * k2, dm);
        let k4 = mg_rhs(x + MG_DT * k3, d1);
        x += MG_DT / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        hist.push(x);
        if step >= TRANSIENT_STEPS && (step - TRANSIENT_STEPS).is_multiple_of(MG_SUBSTEPS) {
            out.push(x);
        }
    }
    out
}

fn min_max_scale(v: &mut [f64]) {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let range = hi - lo;
    for x in v.iter_mut() {
        *x = if range > 0.0 { (*x - lo) / range } else { 0.0 };
    }
}

pub fn generate(spec: &SynthSpec) -> Result<TimeSeries> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut chaos: Vec<f64> = if spec.chaos_amp > 0.0 {
        match spec.chaos_source {
            ChaosSource::LorenzX => {
                let init = [
                    1.0 + rng.random_range(-0.5..0.5),
                    1.0 + rng.random_range(-0.5..0.5),
                    20.0 + rng.random_range(-0.5..0.5),
                ];
                lorenz(spec.length, LORENZ_DT, init).iter().map(|s| s[0]).collect()
            }
            ChaosSource::MackeyGlass => mackey_glass(spec.length, 1.2 + rng.random_range(-0.1..0.1)),
        }
    } else {
        alloc::vec![0.0; spec.length]
    };
    min_max_scale(&mut chaos);
    let mut values = Vec::with_capacity(spec.length);
    for (t, c) in chaos.iter().enumerate() {
        let tf = t as f64;
        let mut x = spec.base
            + spec.daily_amp * math::sin(2.0 * PI * tf / DAILY_PERIOD as f64)
            + spec.weekly_amp * math::sin(2.0 * PI * tf / WEEKLY_PERIOD as f64)
            + spec.chaos_amp * c;
        if spec.noise_std > 0.0 {
            x += spec.noise_std * normal(&mut rng);
        }
        values.push(x);
    }
    let name = match spec.chaos_source {
        ChaosSource::LorenzX => "synth-lorenz-x",
        ChaosSource::MackeyGlass => "synth-mackey-glass",
    };
    TimeSeries::new(name, values, spec.step_minutes)
}
