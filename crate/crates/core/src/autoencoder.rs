//! ODE auto-encoder and the frozen trajectory bank it produces.
//!
//! Training corrupts each sequence by cutting out a random subset of its
//! observed steps, encodes the corrupted sequence with an ODE-RNN, decodes
//! every latent state with one affine layer and scores the reconstruction
//! against the original values wherever they were observed.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Series, SeriesView, TimeSeriesBatch};
use crate::diffcore::{Activation, AdamConfig, Array, Dense, ParameterStore, Tape, Var};
use crate::error::{Error, Result};
use crate::odesolve::SolverOptions;
use crate::recurrent::{ode_rnn_forward, OdeRnn};
use crate::seeding;
use crate::training::{train, LossCurve, TrainOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionPlan {
    pub removal_count: usize,
    /// Removed step indices per sample, ascending.
    pub removed: Vec<Vec<usize>>,
    pub seed: u64,
}

/// Removes `count` observed steps of one series, zeroing `x` and `m` there.
pub fn cut_out_series<R: Rng + ?Sized>(series: &SeriesView<'_>, count: usize, rng: &mut R) -> Result<(Series, Vec<usize>)> {
    let observed: Vec<usize> = (0..series.len()).filter(|&i| series.observed(i)).collect();
    if count > observed.len() {
        return Err(Error::usage(format!(
            "cannot remove {count} points from a series with {} observed",
            observed.len()
        )));
    }
    let mut removed: Vec<usize> = rand::seq::index::sample(rng, observed.len(), count)
        .into_iter()
        .map(|j| observed[j])
        .collect();
    removed.sort_unstable();
    let mut out = series.to_owned();
    let d = series.dim;
    for &i in &removed {
        out.x[i * d..(i + 1) * d].fill(0.0);
        out.m[i * d..(i + 1) * d].fill(0.0);
    }
    Ok((out, removed))
}

/// Cuts `removal_count` observed steps out of every sample.
pub fn cut_out(batch: &TimeSeriesBatch, removal_count: usize, seed: u64) -> Result<(TimeSeriesBatch, CorruptionPlan)> {
    let mut out = batch.clone();
    let (n, d) = (batch.length(), batch.dim());
    let mut removed = Vec::with_capacity(batch.samples());
    {
        let (x, m) = out.parts_mut();
        for k in 0..batch.samples() {
            let mut rng = seeding::substream(seed, "cut_out", k as u64);
            let (series, idx) = cut_out_series(&batch.sample(k), removal_count, &mut rng).map_err(|e| e.in_sample(k))?;
            x.data_mut()[k * n * d..(k + 1) * n * d].copy_from_slice(&series.x);
            m.data_mut()[k * n * d..(k + 1) * n * d].copy_from_slice(&series.m);
            removed.push(idx);
        }
    }
    Ok((out, CorruptionPlan { removal_count, removed, seed }))
}

/// Frozen latent trajectories `u_i^(k)` of the training samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryBank {
    pub format_version: u32,
    pub sample_ids: Vec<String>,
    pub time_grid: Vec<f64>,
    pub latent_dim: usize,
    /// `[K, n, H_u]`.
    pub trajectories: Array,
}

impl TrajectoryBank {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn new(sample_ids: Vec<String>, time_grid: Vec<f64>, trajectories: Array) -> Result<Self> {
        let bank = Self {
            format_version: Self::FORMAT_VERSION,
            latent_dim: trajectories.shape().get(2).copied().unwrap_or(0),
            sample_ids,
            time_grid,
            trajectories,
        };
        bank.validate()?;
        Ok(bank)
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != Self::FORMAT_VERSION {
            return Err(Error::FormatVersion { found: self.format_version, expected: Self::FORMAT_VERSION });
        }
        let expected = [self.sample_ids.len(), self.time_grid.len(), self.latent_dim];
        if self.trajectories.shape() != expected {
            return Err(Error::shape("trajectory_bank", format!("{:?} vs {:?}", self.trajectories.shape(), expected)));
        }
        if !self.trajectories.is_finite() {
            return Err(Error::NonFinite { op: "trajectory_bank" });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn length(&self) -> usize {
        self.time_grid.len()
    }

    /// Whole trajectory of bank entry `k`, `[n · H_u]`.
    pub fn trajectory(&self, k: usize) -> &[f64] {
        let w = self.length() * self.latent_dim;
        &self.trajectories.data()[k * w..(k + 1) * w]
    }

    pub fn at(&self, k: usize, i: usize) -> &[f64] {
        let h = self.latent_dim;
        &self.trajectory(k)[i * h..(i + 1) * h]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|_| Error::MissingArtifact(format!("missing trajectory bank `{}`", path.display())))?;
        let bank: Self = serde_json::from_str(&text)?;
        bank.validate()?;
        Ok(bank)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeAutoencoder {
    pub encoder: OdeRnn,
    pub decoder: Dense,
}

impl OdeAutoencoder {
    /// Registers `ae.enc.*` and `ae.dec.*`.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        input_dim: usize,
        latent: usize,
        ode_units: usize,
        solver: SolverOptions,
        rng: &mut R,
    ) -> Result<Self> {
        let encoder = OdeRnn::new(store, "ae.enc", input_dim, latent, Some(ode_units), solver, rng)?;
        let decoder = Dense::new(store, "ae.dec", latent, input_dim, Activation::Identity, rng)?;
        Ok(Self { encoder, decoder })
    }

    /// Latent trajectory of every sample.
    pub fn encode(&self, store: &ParameterStore, batch: &TimeSeriesBatch) -> Result<Array> {
        let states = ode_rnn_forward(&self.encoder, store, batch)?;
        let h = self.encoder.hidden;
        let data: Vec<f64> = states.iter().flatten().flat_map(|s| s.value.iter().copied()).collect();
        Array::new(vec![batch.samples(), batch.length(), h], data)
    }

    /// Decoded value of each latent state, `[n · D]`.
    pub fn decode_tape(&self, tape: &mut Tape, store: &ParameterStore, states: &[Var]) -> Result<Var> {
        let outs = states.iter().map(|u| self.decoder.forward(tape, store, *u)).collect::<Result<Vec<_>>>()?;
        tape.concat(&outs)
    }

    /// Reconstruction MSE of `original` from its corrupted copy, over originally observed entries.
    pub fn reconstruction_loss(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        corrupted: &SeriesView<'_>,
        original: &SeriesView<'_>,
    ) -> Result<Var> {
        let states = self.encoder.states_tape(tape, store, corrupted)?;
        let y = self.decode_tape(tape, store, &states)?;
        tape.masked_mse(y, original.x, original.m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderConfig {
    pub latent: usize,
    pub ode_units: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Share of each sample's observed steps cut out, redrawn every epoch.
    pub removal_fraction: f64,
    pub solver: SolverOptions,
    pub seed: u64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            latent: 10,
            ode_units: 100,
            epochs: 200,
            batch_size: 200,
            lr: 0.01,
            removal_fraction: 0.2,
            solver: SolverOptions::default(),
            seed: 0,
        }
    }
}

pub struct AutoencoderRun {
    pub model: OdeAutoencoder,
    pub store: ParameterStore,
    pub bank: TrajectoryBank,
    pub curve: LossCurve,
    pub final_loss: f64,
    pub warnings: Vec<String>,
}

/// Trains on `batch` (the training split) and encodes the clean sequences into a bank.
pub fn train_autoencoder(batch: &TimeSeriesBatch, cfg: &AutoencoderConfig) -> Result<AutoencoderRun> {
    if !(0.0..1.0).contains(&cfg.removal_fraction) {
        return Err(Error::usage("removal_fraction must lie in [0, 1)"));
    }
    let mut store = ParameterStore::new();
    let mut rng = seeding::stream(cfg.seed, "autoencoder.init");
    let model = OdeAutoencoder::new(&mut store, batch.dim(), cfg.latent, cfg.ode_units, cfg.solver, &mut rng)?;
    let k_total = batch.samples() as u64;
    let loss = |tape: &mut Tape, store: &ParameterStore, k: usize, epoch: usize| -> Result<Var> {
        let original = batch.sample(k);
        let count = (cfg.removal_fraction * batch.observed_count(k) as f64).floor() as usize;
        let mut rng = seeding::substream(cfg.seed, "corruption", epoch as u64 * k_total + k as u64);
        let (corrupted, _) = cut_out_series(&original, count, &mut rng)?;
        model.reconstruction_loss(tape, store, &corrupted.view(), &original)
    };
    let opts = TrainOptions {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        adam: AdamConfig::with_lr(cfg.lr),
        seed: seeding::stream(cfg.seed, "autoencoder.shuffle").random(),
    };
    let curve = train(&mut store, batch.samples(), &opts, &loss)?;
    let mut warnings = Vec::new();
    if curve.epoch_losses.len() > 1 && curve.never_decreased() {
        warnings.push("auto-encoder reconstruction loss never decreased".to_string());
    }
    let bank = TrajectoryBank::new(batch.ids().to_vec(), batch.times().to_vec(), model.encode(&store, batch)?)?;
    let final_loss = curve.last().unwrap_or(f64::NAN);
    Ok(AutoencoderRun { model, store, bank, curve, final_loss, warnings })
}
