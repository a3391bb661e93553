//! Tape-based reverse-mode differentiation.
//!
//! Every primitive appends a node holding its output value and the handles
//! of its inputs. [`Tape::backward`] walks the nodes in reverse insertion
//! order, which is a reverse topological order because inputs always precede
//! their consumers.

use std::collections::HashMap;

use super::{Array, Gradients, ParamId, ParameterStore};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param,
    MatVec(Var, Var),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    ScaleBy(Var, Var),
    AddScalar(Var, Var),
    LinComb(Var, Vec<(f64, Var)>),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Softmax(Var),
    Concat(Vec<Var>),
    RepeatEach(Var, usize),
    Reshape(Var),
    Slice(Var, usize),
    Gather(Var, Vec<usize>),
    PoolRows(Var, usize),
    RowMean(Var, Vec<f64>),
    Sum(Var),
    Dot(Var, Var),
    MaskedMse(Var, Vec<f64>, Vec<f64>),
    BceLogits(Var, Vec<f64>, Vec<f64>),
}

#[derive(Clone, Debug)]
struct Node {
    value: Array,
    op: Op,
}

/// Records primitive operations for a single forward pass.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array {
        &self.nodes[v.0].value
    }

    pub fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, op_name: &'static str, value: Array, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op_name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Adds a constant leaf. Gradients reach it but are never applied anywhere.
    pub fn input(&mut self, value: Array) -> Var {
        self.nodes.push(Node { value, op: Op::Input });
        Var(self.nodes.len() - 1)
    }

    pub fn vector(&mut self, data: Vec<f64>) -> Var {
        self.input(Array::vector(data))
    }

    /// Leaf bound to a store entry. Repeated calls for the same id return the same node.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        if let Some(v) = self.params.get(&id) {
            return *v;
        }
        self.nodes.push(Node { value: store.value(id).clone(), op: Op::Param });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    /// `W x` for `W: [m, n]`, `x: [n]`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (m, n) = self
            .value(w)
            .dims2()
            .ok_or_else(|| Error::shape("matvec", format!("weight {:?} is not 2-D", self.shape(w))))?;
        if self.value(x).len() != n {
            return Err(Error::shape("matvec", format!("{:?} x {:?}", self.shape(w), self.shape(x))));
        }
        let (wd, xd) = (self.data(w), self.data(x));
        let out = (0..m)
            .map(|i| wd[i * n..(i + 1) * n].iter().zip(xd).map(|(a, b)| a * b).sum())
            .collect();
        self.push("matvec", Array::vector(out), Op::MatVec(w, x))
    }

    /// `A B` for `A: [m, k]`, `B: [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let dims = (self.value(a).dims2(), self.value(b).dims2());
        let ((m, k), (k2, n)) = match dims {
            (Some(da), Some(db)) if da.1 == db.0 => (da, db),
            _ => {
                return Err(Error::shape("matmul", format!("{:?} x {:?}", self.shape(a), self.shape(b))))
            }
        };
        debug_assert_eq!(k, k2);
        let (ad, bd) = (self.data(a), self.data(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = ad[i * k + p];
                for (o, bv) in row.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                    *o += aip * bv;
                }
            }
        }
        self.push("matmul", Array::matrix(m, n, out)?, Op::MatMul(a, b))
    }

    /// Adds `b: [n]` to every row of `a: [m, n]`.
    pub fn add_bias(&mut self, a: Var, b: Var) -> Result<Var> {
        let n = *self.shape(a).last().unwrap_or(&0);
        if self.value(b).len() != n || self.value(b).ndim() != 1 {
            return Err(Error::shape("add_bias", format!("{:?} + {:?}", self.shape(a), self.shape(b))));
        }
        let bd = self.data(b).to_vec();
        let mut out = self.value(a).clone();
        for row in out.data_mut().chunks_mut(n.max(1)) {
            for (o, bv) in row.iter_mut().zip(&bd) {
                *o += bv;
            }
        }
        self.push("add_bias", out, Op::AddBias(a, b))
    }

    fn zip_with(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(x, y)| f(*x, *y)).collect();
        let value = Array::new(self.shape(a).to_vec(), data)?;
        self.push(name, value, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var> {
        let value = self.value(a).map(|x| scale * x + shift);
        self.push("affine", value, Op::Affine(a, scale))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.affine(a, factor, 0.0)
    }

    /// Multiplies every element of `a` by the single value held in `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(Error::shape("scale_by", format!("scalar expected, got {:?}", self.shape(s))));
        }
        let k = self.data(s)[0];
        let value = self.value(a).map(|x| k * x);
        self.push("scale_by", value, Op::ScaleBy(a, s))
    }

    /// Adds the single value held in `s` to every element of `a`.
    pub fn add_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(Error::shape("add_scalar", format!("scalar expected, got {:?}", self.shape(s))));
        }
        let k = self.data(s)[0];
        let value = self.value(a).map(|x| x + k);
        self.push("add_scalar", value, Op::AddScalar(a, s))
    }

    /// `base + Σ cᵢ·termᵢ`, accumulated left to right in one node.
    pub fn lin_comb(&mut self, base: Var, terms: &[(f64, Var)]) -> Result<Var> {
        for (_, t) in terms {
            self.same_shape("lin_comb", base, *t)?;
        }
        let mut out = self.value(base).clone();
        for (c, t) in terms {
            let td = &self.nodes[t.0].value;
            for (o, v) in out.data_mut().iter_mut().zip(td.data()) {
                *o += c * v;
            }
        }
        self.push("lin_comb", out, Op::LinComb(base, terms.to_vec()))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(f64::tanh);
        self.push("tanh", value, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(sigmoid);
        self.push("sigmoid", value, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push("relu", value, Op::Relu(a))
    }

    /// Softmax over the last axis, computed with max-subtraction.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let n = *self.shape(a).last().unwrap_or(&0);
        if n == 0 {
            return Err(Error::shape("softmax", "empty last axis"));
        }
        let mut out = self.value(a).clone();
        for row in out.data_mut().chunks_mut(n) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        self.push("softmax", out, Op::Softmax(a))
    }

    /// Concatenates 1-D arrays.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut out = Vec::new();
        for p in parts {
            if self.value(*p).ndim() != 1 {
                return Err(Error::shape("concat", format!("part {:?} is not 1-D", self.shape(*p))));
            }
            out.extend_from_slice(self.data(*p));
        }
        self.push("concat", Array::vector(out), Op::Concat(parts.to_vec()))
    }

    /// `[a₀ ×r, a₁ ×r, …]` for 1-D `a`.
    pub fn repeat_each(&mut self, a: Var, times: usize) -> Result<Var> {
        let out = self.data(a).iter().flat_map(|&v| std::iter::repeat_n(v, times)).collect();
        self.push("repeat_each", Array::vector(out), Op::RepeatEach(a, times))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshaped(shape.to_vec())?;
        self.push("reshape", value, Op::Reshape(a))
    }

    /// Contiguous slice `[start, start+len)` of a flattened array.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        if start + len > self.value(a).len() {
            return Err(Error::shape(
                "slice",
                format!("[{start}, {}) out of {}", start + len, self.value(a).len()),
            ));
        }
        let out = self.data(a)[start..start + len].to_vec();
        self.push("slice", Array::vector(out), Op::Slice(a, start))
    }

    /// Selects elements of a flattened array by index.
    pub fn gather(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let n = self.value(a).len();
        if let Some(bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::shape("gather", format!("index {bad} out of {n}")));
        }
        let d = self.data(a);
        let out = indices.iter().map(|&i| d[i]).collect();
        self.push("gather", Array::vector(out), Op::Gather(a, indices.to_vec()))
    }

    /// Means over consecutive groups of `group` rows: `[m, n] -> [m/group, n]`.
    pub fn pool_rows(&mut self, a: Var, group: usize) -> Result<Var> {
        let (m, n) = self.value(a).dims2().ok_or_else(|| Error::shape("pool_rows", "input is not 2-D"))?;
        if group == 0 || m % group != 0 {
            return Err(Error::shape("pool_rows", format!("{m} rows not divisible by {group}")));
        }
        let d = self.data(a);
        let groups = m / group;
        let mut out = vec![0.0; groups * n];
        for g in 0..groups {
            for r in 0..group {
                let row = &d[(g * group + r) * n..(g * group + r + 1) * n];
                for (o, v) in out[g * n..(g + 1) * n].iter_mut().zip(row) {
                    *o += v;
                }
            }
            for o in &mut out[g * n..(g + 1) * n] {
                *o /= group as f64;
            }
        }
        self.push("pool_rows", Array::matrix(groups, n, out)?, Op::PoolRows(a, group))
    }

    /// Weighted mean of the rows of `a: [m, n]` with constant weights `[m]`.
    pub fn row_mean(&mut self, a: Var, weights: &[f64]) -> Result<Var> {
        let (m, n) = self.value(a).dims2().ok_or_else(|| Error::shape("row_mean", "input is not 2-D"))?;
        if weights.len() != m {
            return Err(Error::shape("row_mean", format!("{} weights for {m} rows", weights.len())));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::usage("row_mean: weights sum to zero"));
        }
        let d = self.data(a);
        let mut out = vec![0.0; n];
        for (r, w) in weights.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(&d[r * n..(r + 1) * n]) {
                *o += w * v;
            }
        }
        out.iter_mut().for_each(|o| *o /= total);
        self.push("row_mean", Array::vector(out), Op::RowMean(a, weights.to_vec()))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.data(a).iter().sum();
        self.push("sum", Array::scalar(s), Op::Sum(a))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).len() != self.value(b).len() {
            return Err(Error::shape("dot", format!("{:?} . {:?}", self.shape(a), self.shape(b))));
        }
        let s = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).sum();
        self.push("dot", Array::scalar(s), Op::Dot(a, b))
    }

    /// `Σ mask·(pred − target)² / Σ mask`; zero when the mask is empty.
    pub fn masked_mse(&mut self, pred: Var, target: &[f64], mask: &[f64]) -> Result<Var> {
        let n = self.value(pred).len();
        if target.len() != n || mask.len() != n {
            return Err(Error::shape(
                "masked_mse",
                format!("pred {n}, target {}, mask {}", target.len(), mask.len()),
            ));
        }
        let denom: f64 = mask.iter().sum();
        let mut total = 0.0;
        if denom > 0.0 {
            for ((p, t), m) in self.data(pred).iter().zip(target).zip(mask) {
                if *m != 0.0 {
                    total += m * (p - t) * (p - t);
                }
            }
            total /= denom;
        }
        self.push("masked_mse", Array::scalar(total), Op::MaskedMse(pred, target.to_vec(), mask.to_vec()))
    }

    /// Mean binary cross-entropy of logits `z` against labels, over masked entries.
    pub fn bce_with_logits(&mut self, z: Var, labels: &[f64], mask: &[f64]) -> Result<Var> {
        let n = self.value(z).len();
        if labels.len() != n || mask.len() != n {
            return Err(Error::shape("bce_with_logits", format!("{n} logits, {} labels", labels.len())));
        }
        let denom: f64 = mask.iter().sum();
        let mut total = 0.0;
        if denom > 0.0 {
            for ((zv, y), m) in self.data(z).iter().zip(labels).zip(mask) {
                if *m != 0.0 {
                    total += m * (zv.max(0.0) - zv * y + (-zv.abs()).exp().ln_1p());
                }
            }
            total /= denom;
        }
        self.push("bce_with_logits", Array::scalar(total), Op::BceLogits(z, labels.to_vec(), mask.to_vec()))
    }

    /// Reverse pass seeded with ones at `seed`.
    pub fn backward(&self, seed: Var) -> Result<Adjoints> {
        if self.nodes.is_empty() || seed.0 >= self.nodes.len() {
            return Err(Error::usage("backward called before a forward pass recorded the seed"));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; seed.0 + 1];
        adj[seed.0] = Some(vec![1.0; self.nodes[seed.0].value.len()]);

        for i in (0..=seed.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            self.propagate(i, &g, &mut adj);
            adj[i] = Some(g);
        }

        let params = self
            .params
            .iter()
            .filter(|(_, v)| v.0 <= seed.0)
            .map(|(id, v)| (*id, *v))
            .collect();
        Ok(Adjoints { adj, params })
    }

    /// Runs [`Tape::backward`] and adds the parameter gradients to `store`.
    pub fn backward_into(&self, seed: Var, store: &mut ParameterStore) -> Result<()> {
        let adj = self.backward(seed)?;
        store.accumulate(&adj.into_gradients());
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        fn acc(adj: &mut [Option<Vec<f64>>], v: Var, len: usize, f: impl FnOnce(&mut [f64])) {
            let slot = adj[v.0].get_or_insert_with(|| vec![0.0; len]);
            f(slot);
        }
        let len = |v: Var| self.nodes[v.0].value.len();
        let val = |v: Var| self.nodes[v.0].value.data();
        let out = self.nodes[i].value.data();

        match &self.nodes[i].op {
            Op::Input | Op::Param => {}
            Op::MatVec(w, x) => {
                let (m, n) = self.nodes[w.0].value.dims2().unwrap();
                let (wd, xd) = (val(*w), val(*x));
                acc(adj, *w, m * n, |gw| {
                    for r in 0..m {
                        for c in 0..n {
                            gw[r * n + c] += g[r] * xd[c];
                        }
                    }
                });
                acc(adj, *x, n, |gx| {
                    for r in 0..m {
                        for c in 0..n {
                            gx[c] += g[r] * wd[r * n + c];
                        }
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (m, k) = self.nodes[a.0].value.dims2().unwrap();
                let (_, n) = self.nodes[b.0].value.dims2().unwrap();
                let (ad, bd) = (val(*a), val(*b));
                acc(adj, *a, m * k, |ga| {
                    for r in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for c in 0..n {
                                s += g[r * n + c] * bd[p * n + c];
                            }
                            ga[r * k + p] += s;
                        }
                    }
                });
                acc(adj, *b, k * n, |gb| {
                    for r in 0..m {
                        for p in 0..k {
                            let a_rp = ad[r * k + p];
                            for c in 0..n {
                                gb[p * n + c] += a_rp * g[r * n + c];
                            }
                        }
                    }
                });
            }
            Op::AddBias(a, b) => {
                let n = len(*b);
                acc(adj, *a, g.len(), |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(adj, *b, n, |gb| {
                    for row in g.chunks(n.max(1)) {
                        gb.iter_mut().zip(row).for_each(|(x, y)| *x += y);
                    }
                });
            }
            Op::Add(a, b) => {
                acc(adj, *a, g.len(), |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(adj, *b, g.len(), |gb| gb.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            }
            Op::Sub(a, b) => {
                acc(adj, *a, g.len(), |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(adj, *b, g.len(), |gb| gb.iter_mut().zip(g).for_each(|(x, y)| *x -= y));
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (val(*a), val(*b));
                acc(adj, *a, g.len(), |ga| {
                    for j in 0..g.len() {
                        ga[j] += g[j] * bd[j];
                    }
                });
                acc(adj, *b, g.len(), |gb| {
                    for j in 0..g.len() {
                        gb[j] += g[j] * ad[j];
                    }
                });
            }
            Op::Affine(a, scale) => {
                acc(adj, *a, g.len(), |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += scale * y));
            }
            Op::ScaleBy(a, s) => {
                let k = val(*s)[0];
                let ad = val(*a);
                let gs: f64 = g.iter().zip(ad).map(|(x, y)| x * y).sum();
                acc(adj, *a, g.len(), |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += k * y));
                acc(adj, *s, 1, |gsl| gsl[0] += gs);
            }
            Op::AddScalar(a, s) => {
                let gs: f64 = g.iter().sum();
                acc(adj, *a, g.len(), |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(adj, *s, 1, |gsl| gsl[0] += gs);
            }
            Op::LinComb(base, terms) => {
                acc(adj, *base, g.len(), |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                for (c, t) in terms {
                    acc(adj, *t, g.len(), |gt| gt.iter_mut().zip(g).for_each(|(x, y)| *x += c * y));
                }
            }
            Op::Tanh(a) => {
                acc(adj, *a, g.len(), |ga| {
                    for j in 0..g.len() {
                        ga[j] += g[j] * (1.0 - out[j] * out[j]);
                    }
                });
            }
            Op::Sigmoid(a) => {
                acc(adj, *a, g.len(), |ga| {
                    for j in 0..g.len() {
                        ga[j] += g[j] * out[j] * (1.0 - out[j]);
                    }
                });
            }
            Op::Relu(a) => {
                let ad = val(*a);
                acc(adj, *a, g.len(), |ga| {
                    for j in 0..g.len() {
                        if ad[j] > 0.0 {
                            ga[j] += g[j];
                        }
                    }
                });
            }
            Op::Softmax(a) => {
                let n = *self.nodes[i].value.shape().last().unwrap();
                acc(adj, *a, g.len(), |ga| {
                    for ((grow, yrow), garow) in g.chunks(n).zip(out.chunks(n)).zip(ga.chunks_mut(n)) {
                        let dotp: f64 = grow.iter().zip(yrow).map(|(x, y)| x * y).sum();
                        for j in 0..n {
                            garow[j] += yrow[j] * (grow[j] - dotp);
                        }
                    }
                });
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let l = len(*p);
                    let seg = &g[offset..offset + l];
                    acc(adj, *p, l, |gp| gp.iter_mut().zip(seg).for_each(|(x, y)| *x += y));
                    offset += l;
                }
            }
            Op::RepeatEach(a, times) => {
                let l = len(*a);
                acc(adj, *a, l, |ga| {
                    for (j, gj) in ga.iter_mut().enumerate() {
                        *gj += g[j * times..(j + 1) * times].iter().sum::<f64>();
                    }
                });
            }
            Op::Reshape(a) => {
                acc(adj, *a, g.len(), |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            }
            Op::Slice(a, start) => {
                let l = len(*a);
                acc(adj, *a, l, |ga| {
                    ga[*start..*start + g.len()].iter_mut().zip(g).for_each(|(x, y)| *x += y)
                });
            }
            Op::Gather(a, idx) => {
                let l = len(*a);
                acc(adj, *a, l, |ga| {
                    for (j, &src) in idx.iter().enumerate() {
                        ga[src] += g[j];
                    }
                });
            }
            Op::PoolRows(a, group) => {
                let (m, n) = self.nodes[a.0].value.dims2().unwrap();
                let inv = 1.0 / *group as f64;
                acc(adj, *a, m * n, |ga| {
                    for r in 0..m {
                        let gr = &g[(r / group) * n..(r / group + 1) * n];
                        for c in 0..n {
                            ga[r * n + c] += gr[c] * inv;
                        }
                    }
                });
            }
            Op::RowMean(a, weights) => {
                let (m, n) = self.nodes[a.0].value.dims2().unwrap();
                let total: f64 = weights.iter().sum();
                acc(adj, *a, m * n, |ga| {
                    for (r, w) in weights.iter().enumerate() {
                        let f = w / total;
                        for c in 0..n {
                            ga[r * n + c] += f * g[c];
                        }
                    }
                });
            }
            Op::Sum(a) => {
                let l = len(*a);
                acc(adj, *a, l, |ga| ga.iter_mut().for_each(|x| *x += g[0]));
            }
            Op::Dot(a, b) => {
                let (ad, bd) = (val(*a), val(*b));
                let l = ad.len();
                acc(adj, *a, l, |ga| ga.iter_mut().zip(bd).for_each(|(x, y)| *x += g[0] * y));
                acc(adj, *b, l, |gb| gb.iter_mut().zip(ad).for_each(|(x, y)| *x += g[0] * y));
            }
            Op::MaskedMse(p, target, mask) => {
                let denom: f64 = mask.iter().sum();
                let pd = val(*p);
                let l = pd.len();
                acc(adj, *p, l, |gp| {
                    if denom > 0.0 {
                        for j in 0..l {
                            gp[j] += g[0] * 2.0 * mask[j] * (pd[j] - target[j]) / denom;
                        }
                    }
                });
            }
            Op::BceLogits(z, labels, mask) => {
                let denom: f64 = mask.iter().sum();
                let zd = val(*z);
                let l = zd.len();
                acc(adj, *z, l, |gz| {
                    if denom > 0.0 {
                        for j in 0..l {
                            gz[j] += g[0] * mask[j] * (sigmoid(zd[j]) - labels[j]) / denom;
                        }
                    }
                });
            }
        }
    }
}

/// Result of a reverse pass: the adjoint of every node reachable from the seed.
#[derive(Clone, Debug)]
pub struct Adjoints {
    adj: Vec<Option<Vec<f64>>>,
    params: Vec<(ParamId, Var)>,
}

impl Adjoints {
    /// Gradient of the seed with respect to `v`; zeros if `v` does not influence it.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Array {
        let shape = tape.shape(v).to_vec();
        match self.adj.get(v.0).and_then(|a| a.as_ref()) {
            Some(g) => Array::new(shape, g.clone()).expect("adjoint matches node shape"),
            None => Array::zeros(&shape),
        }
    }

    pub fn into_gradients(self) -> Gradients {
        let mut adj = self.adj;
        let entries = self
            .params
            .into_iter()
            .filter_map(|(id, v)| adj[v.0].take().map(|g| (id, g)))
            .collect();
        Gradients::from_entries(entries)
    }
}

/// Scalar convenience: `sigmoid(x)` without a tape.
pub fn sigmoid_scalar(x: f64) -> f64 {
    sigmoid(x)
}
