use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Array;
use crate::error::{Error, Result};

/// Index of an entry in a [`ParameterStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug)]
struct Entry {
    name: String,
    value: Array,
    grad: Array,
    m: Array,
    v: Array,
}

/// Named trainable arrays with gradient accumulators and Adam moments.
#[derive(Clone, Debug, Default)]
pub struct ParameterStore {
    entries: Vec<Entry>,
    index: HashMap<String, ParamId>,
    step: u64,
}

/// Sparse per-parameter gradient set, produced by one backward pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    entries: Vec<(ParamId, Vec<f64>)>,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn from_entries(mut entries: Vec<(ParamId, Vec<f64>)>) -> Self {
        entries.sort_by_key(|(id, _)| *id);
        Self { entries }
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.entries
            .binary_search_by_key(&id, |(i, _)| *i)
            .ok()
            .map(|pos| self.entries[pos].1.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.entries.iter().map(|(id, g)| (*id, g.as_slice()))
    }

    /// Adds `other` into `self`, in parameter order.
    pub fn add_assign(&mut self, other: &Gradients) {
        for (id, g) in other.iter() {
            match self.entries.binary_search_by_key(&id, |(i, _)| *i) {
                Ok(pos) => {
                    for (a, b) in self.entries[pos].1.iter_mut().zip(g) {
                        *a += b;
                    }
                }
                Err(pos) => self.entries.insert(pos, (id, g.to_vec())),
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, g) in &mut self.entries {
            for v in g.iter_mut() {
                *v *= factor;
            }
        }
    }

    /// Sums a slice of gradient sets left to right.
    pub fn sum(parts: &[Gradients]) -> Gradients {
        let mut total = Gradients::new();
        for p in parts {
            total.add_assign(p);
        }
        total
    }
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::usage(format!("duplicate parameter name `{name}`")));
        }
        let id = ParamId(self.entries.len());
        let zeros = Array::zeros(value.shape());
        self.entries.push(Entry {
            name: name.clone(),
            grad: zeros.clone(),
            m: zeros.clone(),
            v: zeros,
            value,
        });
        self.index.insert(name, id);
        Ok(id)
    }

    /// Adds a weight matrix `[rows, cols]` drawn from `uniform(±1/sqrt(fan_in))`.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let len = shape.iter().product();
        let data = (0..len).map(|_| rng.random_range(-bound..bound)).collect();
        self.add(name, Array::new(shape.to_vec(), data)?)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn value(&self, id: ParamId) -> &Array {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Array {
        &self.entries[id.0].grad
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn accumulate(&mut self, grads: &Gradients) {
        for (id, g) in grads.iter() {
            for (a, b) in self.entries[id.0].grad.data_mut().iter_mut().zip(g) {
                *a += b;
            }
        }
    }

    /// Bias-corrected Adam update from the accumulated gradients.
    ///
    /// `step` is the 1-based optimizer step used for bias correction.
    pub fn adam_step(&mut self, cfg: &AdamConfig, step: u64) -> Result<()> {
        if step < 1 {
            return Err(Error::usage("adam step counter must be >= 1"));
        }
        let bc1 = 1.0 - cfg.beta1.powi(step as i32);
        let bc2 = 1.0 - cfg.beta2.powi(step as i32);
        for e in &mut self.entries {
            let g = e.grad.data();
            let m = e.m.data_mut();
            for (mi, gi) in m.iter_mut().zip(g) {
                *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            }
            let v = e.v.data_mut();
            for (vi, gi) in v.iter_mut().zip(g) {
                *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            }
            let (m, v) = (e.m.data(), e.v.data());
            for ((p, mi), vi) in e.value.data_mut().iter_mut().zip(m).zip(v) {
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        self.step = step;
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: Checkpoint::FORMAT_VERSION,
            names: self.entries.iter().map(|e| e.name.clone()).collect(),
            shapes: self.entries.iter().map(|e| e.value.shape().to_vec()).collect(),
            values: self.entries.iter().map(|e| e.value.data().to_vec()).collect(),
            adam_moments: AdamMoments {
                m: self.entries.iter().map(|e| e.m.data().to_vec()).collect(),
                v: self.entries.iter().map(|e| e.v.data().to_vec()).collect(),
            },
            step: self.step,
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        if ckpt.format_version != Checkpoint::FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: ckpt.format_version,
                expected: Checkpoint::FORMAT_VERSION,
            });
        }
        let n = ckpt.names.len();
        if [ckpt.shapes.len(), ckpt.values.len(), ckpt.adam_moments.m.len(), ckpt.adam_moments.v.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(Error::shape("checkpoint", "entry lists have different lengths"));
        }
        let mut store = ParameterStore::new();
        let parts = ckpt
            .names
            .into_iter()
            .zip(ckpt.shapes)
            .zip(ckpt.values)
            .zip(ckpt.adam_moments.m.into_iter().zip(ckpt.adam_moments.v));
        for (((name, shape), values), (m, v)) in parts {
            let id = store.add(name, Array::new(shape.clone(), values)?)?;
            store.entries[id.0].m = Array::new(shape.clone(), m)?;
            store.entries[id.0].v = Array::new(shape, v)?;
        }
        store.step = ckpt.step;
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(&self.to_checkpoint())?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_checkpoint(serde_json::from_str(&text)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Free-function form of [`ParameterStore::adam_step`].
pub fn adam_step(store: &mut ParameterStore, cfg: &AdamConfig, step: u64) -> Result<()> {
    store.adam_step(cfg, step)
}

/// Serialized form of a [`ParameterStore`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub names: Vec<String>,
    pub shapes: Vec<Vec<usize>>,
    pub values: Vec<Vec<f64>>,
    pub adam_moments: AdamMoments,
    pub step: u64,
}

impl Checkpoint {
    pub const FORMAT_VERSION: u32 = 1;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamMoments {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(x: f64) -> (ParameterStore, ParamId) {
        let mut s = ParameterStore::new();
        let id = s.add("x", Array::scalar(x)).unwrap();
        (s, id)
    }

    #[test]
    fn duplicate_names_rejected() {
        let (mut s, _) = scalar_store(1.0);
        assert!(s.add("x", Array::scalar(2.0)).is_err());
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let (mut s, id) = scalar_store(0.7);
        for step in 1..=5 {
            s.adam_step(&AdamConfig::default(), step).unwrap();
        }
        assert_eq!(s.value(id).data()[0], 0.7);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g^2 after bias correction, so the update is lr * g/(|g| + eps).
        let (mut s, id) = scalar_store(0.0);
        s.accumulate(&Gradients::from_entries(vec![(id, vec![1.0])]));
        s.adam_step(&AdamConfig::default(), 1).unwrap();
        let expected = -0.01 * 1.0 / (1.0 + 1e-8);
        assert!((s.value(id).data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn step_zero_is_usage_error() {
        let (mut s, _) = scalar_store(0.0);
        assert!(matches!(s.adam_step(&AdamConfig::default(), 0), Err(Error::Usage(_))));
    }

    #[test]
    fn quadratic_descent_is_monotone() {
        let (mut s, id) = scalar_store(1.0);
        let mut prev = 1.0f64;
        for step in 1..=100 {
            s.zero_grads();
            let x = s.value(id).data()[0];
            s.accumulate(&Gradients::from_entries(vec![(id, vec![2.0 * x])]));
            s.adam_step(&AdamConfig::default(), step).unwrap();
            let next = s.value(id).data()[0];
            assert!(next.abs() < prev.abs(), "step {step}: {next} vs {prev}");
            prev = next;
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut s = ParameterStore::new();
        let mut rng = rand::rng();
        let w = s.add_uniform("w", &[3, 2], 2, &mut rng).unwrap();
        s.add("b", Array::zeros(&[3])).unwrap();
        s.accumulate(&Gradients::from_entries(vec![(w, vec![0.1; 6])]));
        s.adam_step(&AdamConfig::default(), 1).unwrap();
        let json = serde_json::to_string(&s.to_checkpoint()).unwrap();
        let back = ParameterStore::from_checkpoint(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.to_checkpoint(), s.to_checkpoint());
    }
}
