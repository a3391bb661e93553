use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{TargetKind, TimeSeriesBatch};
use crate::diffcore::Array;
use crate::error::{Error, Result};
use crate::seeding;

/// Periodic family `a·sin(2π f t + φ) + noise·ε` driven by standard-normal draws:
/// `ln a = amp_log_sd·z₁`, `ln f = ln(base_freq) + freq_log_sd·z₂`, `φ = π·z₃`, `ε ~ N(0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub amp_log_sd: f64,
    pub base_freq: f64,
    pub freq_log_sd: f64,
    pub noise: f64,
    /// Time span covered by the `n` input steps plus the forecast step.
    pub span: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self { amp_log_sd: 0.25, base_freq: 2.0, freq_log_sd: 0.25, noise: 0.1, span: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicParams {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

/// [`generate_periodic`] with default generator settings.
pub fn generate_gaussian_periodic(samples: usize, length: usize, seed: u64) -> Result<TimeSeriesBatch> {
    generate_periodic(samples, length, seed, &GeneratorConfig::default()).map(|(b, _)| b)
}

/// `samples` fully observed univariate series of `length` steps; step `i`'s
/// target is the series value at step `i + 1` (one extra point is drawn).
pub fn generate_periodic(
    samples: usize,
    length: usize,
    seed: u64,
    cfg: &GeneratorConfig,
) -> Result<(TimeSeriesBatch, Vec<PeriodicParams>)> {
    if samples == 0 || length == 0 {
        return Err(Error::usage("generator needs at least one sample and one step"));
    }
    let grid: Vec<f64> = (0..=length).map(|i| cfg.span * i as f64 / length as f64).collect();
    let mut x = Vec::with_capacity(samples * length);
    let mut target = Vec::with_capacity(samples * length);
    let mut params = Vec::with_capacity(samples);
    for k in 0..samples {
        let mut rng = seeding::substream(seed, "generator", k as u64);
        let z: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let p = PeriodicParams {
            amplitude: (cfg.amp_log_sd * z[0]).exp(),
            frequency: (cfg.base_freq.ln() + cfg.freq_log_sd * z[1]).exp(),
            phase: std::f64::consts::PI * z[2],
        };
        let series: Vec<f64> = grid
            .iter()
            .map(|t| {
                let eps: f64 = rng.sample(StandardNormal);
                p.amplitude * (std::f64::consts::TAU * p.frequency * t + p.phase).sin() + cfg.noise * eps
            })
            .collect();
        x.extend_from_slice(&series[..length]);
        target.extend_from_slice(&series[1..]);
        params.push(p);
    }
    let batch = TimeSeriesBatch::new(
        Array::new(vec![samples, length, 1], x)?,
        Array::filled(&[samples, length, 1], 1.0),
        grid[..length].to_vec(),
        Array::new(vec![samples, length, 1], target)?,
        Array::filled(&[samples, length, 1], 1.0),
        TargetKind::NextValue,
        (0..samples).map(|k| format!("s{k:05}")).collect(),
    )?;
    Ok((batch, params))
}
