//! Time-series batches and dataset construction.
//!
//! A batch holds `K` samples on one shared, strictly ascending time grid of
//! length `n`, with values `x: [K, n, D]`, a binary mask `m` of the same
//! shape, and per-step targets `[K, n, D_out]`. Values are forced to zero
//! wherever the mask is zero.

mod csv;
mod synthetic;
mod transform;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffcore::Array;
use crate::error::{Error, Result};

pub use self::csv::{load_csv, read_csv, CsvSchema};
pub use synthetic::{generate_gaussian_periodic, generate_periodic, GeneratorConfig, PeriodicParams};
pub use transform::{apply_sparsity, denormalize, normalize_01, split_shuffled, GapShape, NormBounds};

/// How the per-step targets relate to the values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// `target[i]` is the value at step `i + 1` (one-step-ahead forecasting).
    NextValue,
    /// A separate regression target column.
    Explicit,
    /// Binary class labels.
    Label,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesBatch {
    x: Array,
    m: Array,
    t: Vec<f64>,
    target: Array,
    target_mask: Array,
    target_kind: TargetKind,
    ids: Vec<String>,
}

/// Borrowed view of one sample.
#[derive(Clone, Copy, Debug)]
pub struct SeriesView<'a> {
    pub x: &'a [f64],
    pub m: &'a [f64],
    pub t: &'a [f64],
    pub dim: usize,
    pub target: &'a [f64],
    pub target_mask: &'a [f64],
    pub out_dim: usize,
    pub target_kind: TargetKind,
}

/// Owned single sample with public fields; models never assume `x == 0`
/// where `m == 0`, so this type does not enforce it.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub x: Vec<f64>,
    pub m: Vec<f64>,
    pub t: Vec<f64>,
    pub dim: usize,
    pub target: Vec<f64>,
    pub target_mask: Vec<f64>,
    pub out_dim: usize,
    pub target_kind: TargetKind,
}

impl Series {
    pub fn view(&self) -> SeriesView<'_> {
        SeriesView {
            x: &self.x,
            m: &self.m,
            t: &self.t,
            dim: self.dim,
            target: &self.target,
            target_mask: &self.target_mask,
            out_dim: self.out_dim,
            target_kind: self.target_kind,
        }
    }
}

impl SeriesView<'_> {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn values_at(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mask_at(&self, i: usize) -> &[f64] {
        &self.m[i * self.dim..(i + 1) * self.dim]
    }

    /// True when any feature is observed at step `i`.
    pub fn observed(&self, i: usize) -> bool {
        self.mask_at(i).iter().any(|v| *v != 0.0)
    }

    /// Values multiplied by the mask, so unobserved entries are exactly zero.
    pub fn masked_values_at(&self, i: usize) -> Vec<f64> {
        self.values_at(i).iter().zip(self.mask_at(i)).map(|(x, m)| x * m).collect()
    }

    /// Target mask usable for training.
    ///
    /// For next-value targets a step only counts when the value it forecasts
    /// was actually observed; the final step's target lies past the input
    /// window and keeps its own mask.
    pub fn training_target_mask(&self) -> Vec<f64> {
        let mut mask = self.target_mask.to_vec();
        if self.target_kind == TargetKind::NextValue {
            let n = self.len();
            for i in 0..n.saturating_sub(1) {
                for d in 0..self.out_dim {
                    let obs = self.m[(i + 1) * self.dim + d.min(self.dim - 1)];
                    mask[i * self.out_dim + d] *= obs;
                }
            }
        }
        mask
    }

    /// Last step that carries any target.
    pub fn final_target_index(&self) -> Option<usize> {
        (0..self.len()).rev().find(|&i| {
            self.target_mask[i * self.out_dim..(i + 1) * self.out_dim].iter().any(|v| *v != 0.0)
        })
    }

    pub fn to_owned(&self) -> Series {
        Series {
            x: self.x.to_vec(),
            m: self.m.to_vec(),
            t: self.t.to_vec(),
            dim: self.dim,
            target: self.target.to_vec(),
            target_mask: self.target_mask.to_vec(),
            out_dim: self.out_dim,
            target_kind: self.target_kind,
        }
    }
}

fn check_binary(op: &'static str, a: &Array) -> Result<()> {
    if a.data().iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(Error::shape(op, "mask entries must be 0 or 1"));
    }
    Ok(())
}

impl TimeSeriesBatch {
    /// Validates shapes and zeroes `x` (and targets of `NextValue` batches are left untouched).
    pub fn new(
        mut x: Array,
        m: Array,
        t: Vec<f64>,
        target: Array,
        target_mask: Array,
        target_kind: TargetKind,
        ids: Vec<String>,
    ) -> Result<Self> {
        let [k, n, d] = match x.shape() {
            [k, n, d] => [*k, *n, *d],
            other => return Err(Error::shape("batch", format!("values must be [K, n, D], got {other:?}"))),
        };
        if m.shape() != x.shape() {
            return Err(Error::shape("batch", format!("mask {:?} vs values {:?}", m.shape(), x.shape())));
        }
        if t.len() != n {
            return Err(Error::shape("batch", format!("time grid has {} points, values have {n}", t.len())));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::usage("time grid must be strictly ascending"));
        }
        match target.shape() {
            [tk, tn, _] if *tk == k && *tn == n => {}
            other => return Err(Error::shape("batch", format!("targets must be [{k}, {n}, D_out], got {other:?}"))),
        }
        if target_mask.shape() != target.shape() {
            return Err(Error::shape("batch", "target mask shape differs from targets"));
        }
        if ids.len() != k {
            return Err(Error::shape("batch", format!("{} ids for {k} samples", ids.len())));
        }
        check_binary("batch", &m)?;
        check_binary("batch", &target_mask)?;
        let md = m.data().to_vec();
        for (v, mv) in x.data_mut().iter_mut().zip(&md) {
            if *mv == 0.0 {
                *v = 0.0;
            }
        }
        let _ = d;
        Ok(Self { x, m, t, target, target_mask, target_kind, ids })
    }

    pub fn samples(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn length(&self) -> usize {
        self.x.shape()[1]
    }

    pub fn dim(&self) -> usize {
        self.x.shape()[2]
    }

    pub fn out_dim(&self) -> usize {
        self.target.shape()[2]
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn values(&self) -> &Array {
        &self.x
    }

    pub fn mask(&self) -> &Array {
        &self.m
    }

    pub fn targets(&self) -> &Array {
        &self.target
    }

    pub fn target_mask(&self) -> &Array {
        &self.target_mask
    }

    pub fn target_kind(&self) -> TargetKind {
        self.target_kind
    }

    pub fn sample(&self, k: usize) -> SeriesView<'_> {
        let (n, d, o) = (self.length(), self.dim(), self.out_dim());
        SeriesView {
            x: &self.x.data()[k * n * d..(k + 1) * n * d],
            m: &self.m.data()[k * n * d..(k + 1) * n * d],
            t: &self.t,
            dim: d,
            target: &self.target.data()[k * n * o..(k + 1) * n * o],
            target_mask: &self.target_mask.data()[k * n * o..(k + 1) * n * o],
            out_dim: o,
            target_kind: self.target_kind,
        }
    }

    /// Number of observed time points of sample `k`.
    pub fn observed_count(&self, k: usize) -> usize {
        let s = self.sample(k);
        (0..s.len()).filter(|&i| s.observed(i)).count()
    }

    /// New batch holding the given samples in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let (n, d, o) = (self.length(), self.dim(), self.out_dim());
        let mut x = Vec::with_capacity(indices.len() * n * d);
        let mut m = Vec::with_capacity(indices.len() * n * d);
        let mut tg = Vec::with_capacity(indices.len() * n * o);
        let mut tm = Vec::with_capacity(indices.len() * n * o);
        let mut ids = Vec::with_capacity(indices.len());
        for &k in indices {
            if k >= self.samples() {
                return Err(Error::usage(format!("sample index {k} out of {}", self.samples())));
            }
            let s = self.sample(k);
            x.extend_from_slice(s.x);
            m.extend_from_slice(s.m);
            tg.extend_from_slice(s.target);
            tm.extend_from_slice(s.target_mask);
            ids.push(self.ids[k].clone());
        }
        let kk = indices.len();
        Self::new(
            Array::new(vec![kk, n, d], x)?,
            Array::new(vec![kk, n, d], m)?,
            self.t.clone(),
            Array::new(vec![kk, n, o], tg)?,
            Array::new(vec![kk, n, o], tm)?,
            self.target_kind,
            ids,
        )
    }

    /// Re-checks mask/value coupling and grid order.
    pub fn check_invariants(&self) -> Result<()> {
        check_binary("batch", &self.m)?;
        if self.x.data().iter().zip(self.m.data()).any(|(x, m)| *m == 0.0 && *x != 0.0) {
            return Err(Error::usage("value present where mask is zero"));
        }
        if self.t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::usage("time grid must be strictly ascending"));
        }
        Ok(())
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Array, &mut Array) {
        (&mut self.x, &mut self.m)
    }

    pub(crate) fn targets_mut(&mut self) -> &mut Array {
        &mut self.target
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let b: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        b.check_invariants()?;
        Ok(b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Csv,
}

/// Provenance of a prepared dataset; the bounds reproduce the normalization exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub source: DataSource,
    pub length: usize,
    pub dim: usize,
    pub sparsity: f64,
    pub seed: u64,
    pub bounds: Option<NormBounds>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
