use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{TargetKind, TimeSeriesBatch};
use crate::error::{Error, Result};
use crate::seeding;

/// Shape of the removed regions in [`apply_sparsity`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapShape {
    /// Contiguous runs of missing steps (intermittent series).
    #[default]
    Contiguous,
    /// Independently chosen steps (bumpy series).
    Iid,
}

/// Removes `⌊fraction·n⌋` observed time points per sample, zeroing values and mask.
pub fn apply_sparsity(batch: &TimeSeriesBatch, fraction: f64, seed: u64, shape: GapShape) -> Result<TimeSeriesBatch> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::usage(format!("sparsity fraction must lie in [0, 1), got {fraction}")));
    }
    let n = batch.length();
    let remove = (fraction * n as f64).floor() as usize;
    if fraction > 0.0 && remove == 0 {
        return Err(Error::usage(format!("fraction {fraction} removes no points from length {n}")));
    }
    let d = batch.dim();
    let mut out = batch.clone();
    for k in 0..batch.samples() {
        let s = batch.sample(k);
        let observed: Vec<bool> = (0..n).map(|i| s.observed(i)).collect();
        let available = observed.iter().filter(|o| **o).count();
        if remove > available {
            return Err(Error::usage(format!(
                "sample {k} ({}) has {available} observed points, cannot remove {remove}",
                batch.ids()[k]
            )));
        }
        let mut rng = seeding::substream(seed, "sparsity", k as u64);
        let chosen = match shape {
            GapShape::Contiguous => contiguous_runs(&observed, remove, &mut rng),
            GapShape::Iid => {
                let mut idx: Vec<usize> = (0..n).filter(|&i| observed[i]).collect();
                idx.shuffle(&mut rng);
                idx.truncate(remove);
                idx
            }
        };
        let (x, m) = out.parts_mut();
        for i in chosen {
            let base = (k * n + i) * d;
            x.data_mut()[base..base + d].fill(0.0);
            m.data_mut()[base..base + d].fill(0.0);
        }
    }
    Ok(out)
}

fn contiguous_runs<R: Rng>(observed: &[bool], remove: usize, rng: &mut R) -> Vec<usize> {
    let n = observed.len();
    let max_run = (remove / 2).max(1);
    let mut taken = vec![false; n];
    let mut chosen = Vec::with_capacity(remove);
    while chosen.len() < remove {
        let len = rng.random_range(1..=max_run);
        let start = rng.random_range(0..n);
        for i in start..(start + len).min(n) {
            if observed[i] && !taken[i] {
                taken[i] = true;
                chosen.push(i);
                if chosen.len() == remove {
                    break;
                }
            }
        }
    }
    chosen
}

/// Per-feature min/max used for (0, 1) scaling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormBounds {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// Bounds of a separate regression target, when there is one.
    pub target_min: Option<Vec<f64>>,
    pub target_max: Option<Vec<f64>>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

fn scale(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.5
    }
}

fn unscale(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        v * (hi - lo) + lo
    } else {
        lo
    }
}

fn observed_range(values: &[f64], mask: &[f64], width: usize, feature: usize) -> Option<(f64, f64)> {
    values
        .chunks(width)
        .zip(mask.chunks(width))
        .filter(|(_, m)| m[feature] != 0.0)
        .map(|(v, _)| v[feature])
        .fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
}

impl NormBounds {
    /// Fits bounds on the observed entries of `train`.
    pub fn fit(train: &TimeSeriesBatch) -> Result<Self> {
        let d = train.dim();
        let mut warnings = Vec::new();
        let (mut min, mut max) = (Vec::with_capacity(d), Vec::with_capacity(d));
        for f in 0..d {
            let (lo, hi) = observed_range(train.values().data(), train.mask().data(), d, f)
                .ok_or_else(|| Error::usage(format!("feature {f} has no observed values")))?;
            if hi == lo {
                warnings.push(format!("feature {f} is constant ({lo}); mapped to 0.5"));
            }
            min.push(lo);
            max.push(hi);
        }
        let (mut target_min, mut target_max) = (None, None);
        if train.target_kind() == TargetKind::Explicit {
            let o = train.out_dim();
            let (mut tmin, mut tmax) = (Vec::new(), Vec::new());
            for f in 0..o {
                let (lo, hi) = observed_range(train.targets().data(), train.target_mask().data(), o, f)
                    .unwrap_or((0.0, 1.0));
                tmin.push(lo);
                tmax.push(hi);
            }
            target_min = Some(tmin);
            target_max = Some(tmax);
        }
        Ok(Self { min, max, target_min, target_max, warnings })
    }

    /// Scales observed values (and value-like targets) of `batch`.
    ///
    /// Data outside the fitted range maps outside `[0, 1]`.
    pub fn apply(&self, batch: &TimeSeriesBatch) -> Result<TimeSeriesBatch> {
        self.transform(batch, scale)
    }

    pub fn invert(&self, batch: &TimeSeriesBatch) -> Result<TimeSeriesBatch> {
        self.transform(batch, unscale)
    }

    fn transform(&self, batch: &TimeSeriesBatch, f: fn(f64, f64, f64) -> f64) -> Result<TimeSeriesBatch> {
        let d = batch.dim();
        if d != self.min.len() {
            return Err(Error::shape("normalize", format!("{} bounds for {d} features", self.min.len())));
        }
        let mut out = batch.clone();
        {
            let (x, m) = out.parts_mut();
            let md = m.data().to_vec();
            for (i, (v, mv)) in x.data_mut().iter_mut().zip(&md).enumerate() {
                if *mv != 0.0 {
                    let feat = i % d;
                    *v = f(*v, self.min[feat], self.max[feat]);
                }
            }
        }
        let o = batch.out_dim();
        let tmask = batch.target_mask().data().to_vec();
        let bounds: Option<(&[f64], &[f64])> = match batch.target_kind() {
            TargetKind::NextValue => Some((&self.min, &self.max)),
            TargetKind::Explicit => self.target_min.as_deref().zip(self.target_max.as_deref()),
            TargetKind::Label => None,
        };
        if let Some((lo, hi)) = bounds {
            for (i, (v, mv)) in out.targets_mut().data_mut().iter_mut().zip(&tmask).enumerate() {
                if *mv != 0.0 {
                    let feat = (i % o).min(lo.len() - 1);
                    *v = f(*v, lo[feat], hi[feat]);
                }
            }
        }
        out.check_invariants()?;
        Ok(out)
    }
}

/// Fits bounds on `batch` and scales it into `[0, 1]`.
pub fn normalize_01(batch: &TimeSeriesBatch) -> Result<(TimeSeriesBatch, NormBounds)> {
    let bounds = NormBounds::fit(batch)?;
    Ok((bounds.apply(batch)?, bounds))
}

pub fn denormalize(batch: &TimeSeriesBatch, bounds: &NormBounds) -> Result<TimeSeriesBatch> {
    bounds.invert(batch)
}

/// Shuffled split into `⌊train_fraction·K⌋` training samples and the rest.
/// Each part keeps the original sample order.
pub fn split_shuffled(batch: &TimeSeriesBatch, train_fraction: f64, seed: u64) -> Result<(TimeSeriesBatch, TimeSeriesBatch)> {
    let k = batch.samples();
    if k < 2 {
        return Err(Error::usage("splitting needs at least two samples"));
    }
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::usage("train fraction must lie in [0, 1]"));
    }
    let n_train = (train_fraction * k as f64).floor() as usize;
    let mut idx: Vec<usize> = (0..k).collect();
    idx.shuffle(&mut seeding::stream(seed, "split"));
    let (mut tr, mut te) = (idx[..n_train].to_vec(), idx[n_train..].to_vec());
    tr.sort_unstable();
    te.sort_unstable();
    Ok((batch.select(&tr)?, batch.select(&te)?))
}
