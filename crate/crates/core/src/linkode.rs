//! Link-ODE: the ODE-RNN recursion with cross-sample context.
//!
//! At step `i` the context is `p_i = (w_1·l_1(t_i), …, w_L·l_L(t_i))`, the
//! level trajectories of the sample's pyramid scaled by learnable level
//! weights. An observed step feeds `concat(p_i, x ⊙ m, m)` to the cell; an
//! unobserved step adds `σ(g)·W_c·p_i` to the ODE-evolved state.

use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::TrajectoryBank;
use crate::data::{SeriesView, TimeSeriesBatch};
use crate::diffcore::{Array, Checkpoint, ParamId, ParameterStore, Tape, Var};
use crate::error::{Error, Result};
use crate::odesolve::{OdeDynamics, SolverOptions};
use crate::pyramid::{ImportancePyramid, PyramidSet};
use crate::recurrent::{cell_input, evolve, predict, CellParams, HiddenState, OdeRnn, OutputHead};

/// Weighted level trajectories at one time index, `[L, H_u]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelContext {
    pub p: Array,
}

impl LevelContext {
    pub fn flat(&self) -> &[f64] {
        self.p.data()
    }
}

/// Level trajectories at `time_index` scaled by the pyramid's weights.
pub fn level_combine(pyramid: &ImportancePyramid, time_index: usize) -> LevelContext {
    let l = pyramid.num_levels();
    let h = pyramid.levels.first().map_or(0, |lv| lv.trajectory.shape()[1]);
    let mut p = Vec::with_capacity(l * h);
    for (level, w) in pyramid.levels.iter().zip(&pyramid.weights) {
        p.extend(level.trajectory.row(time_index).iter().map(|v| w * v));
    }
    LevelContext { p: Array::matrix(l, h, p).expect("L·H_u values") }
}

/// Per-step trace of a forward pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    /// ODE-evolved own state before any fusion.
    pub own: HiddenState,
    /// Flattened weighted context `p_i`.
    pub cross: Vec<f64>,
    pub fused: HiddenState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkOde {
    pub input_dim: usize,
    pub hidden: usize,
    pub latent: usize,
    pub levels: usize,
    /// Cell over `concat(p, x ⊙ m, m)`.
    pub cell: CellParams,
    pub dynamics: OdeDynamics,
    pub solver: SolverOptions,
    /// `w: [L]`, initialised to `j / L`.
    pub level_weights: ParamId,
    /// `W_c: [H, L·H_u]`.
    pub gap_weight: ParamId,
    /// Scalar gate logit `g`.
    pub gap_gate: ParamId,
}

struct Step {
    own: Var,
    cross: Var,
    fused: Var,
}

impl LinkOde {
    /// Registers `link.cell.*`, `link.ode.*`, `link.level_w`, `link.gap.w` and `link.gap.g`.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        input_dim: usize,
        hidden: usize,
        latent: usize,
        levels: usize,
        ode_units: usize,
        solver: SolverOptions,
        rng: &mut R,
    ) -> Result<Self> {
        if levels == 0 {
            return Err(Error::usage("Link-ODE needs at least one level"));
        }
        let ctx = levels * latent;
        // The own-state path draws exactly what an ODE-RNN would from `rng`;
        // the cross path starts silent, so the model begins as that ODE-RNN.
        let mut own_store = ParameterStore::new();
        let own = OdeRnn::new(&mut own_store, "own", input_dim, hidden, Some(ode_units), solver, rng)?;
        let mut unused = crate::seeding::stream(0, "link.placeholder");
        let cell = CellParams::new(store, "link.cell", ctx + 2 * input_dim, hidden, &mut unused)?;
        let dynamics = OdeDynamics::new(store, "link.ode", hidden, ode_units, 1, &mut unused)?;
        let width = ctx + 2 * input_dim;
        for (dst, src) in [(cell.w_z, own.cell.w_z), (cell.w_r, own.cell.w_r), (cell.w_n, own.cell.w_n)] {
            let v = own_store.value(src).data();
            let widened: Vec<f64> = (0..hidden)
                .flat_map(|r| std::iter::repeat_n(0.0, ctx).chain(v[r * 2 * input_dim..(r + 1) * 2 * input_dim].iter().copied()))
                .collect();
            debug_assert_eq!(widened.len(), hidden * width);
            store.value_mut(dst).data_mut().copy_from_slice(&widened);
        }
        let own_dynamics = own.dynamics.as_ref().expect("built with dynamics");
        let copies = [(cell.u_z, own.cell.u_z), (cell.u_r, own.cell.u_r), (cell.u_n, own.cell.u_n)]
            .into_iter()
            .chain(dynamics.layers.iter().zip(&own_dynamics.layers).flat_map(|(a, b)| [(a.weight, b.weight), (a.bias, b.bias)]));
        for (dst, src) in copies {
            store.value_mut(dst).data_mut().copy_from_slice(own_store.value(src).data());
        }
        let level_weights = store.add("link.level_w", Array::vector(crate::pyramid::level_weights(levels)))?;
        let gap_weight = store.add("link.gap.w", Array::zeros(&[hidden, ctx]))?;
        let gap_gate = store.add("link.gap.g", Array::vector(vec![-4.0]))?;
        Ok(Self { input_dim, hidden, latent, levels, cell, dynamics, solver, level_weights, gap_weight, gap_gate })
    }

    fn check(&self, series: &SeriesView<'_>, pyramid: &ImportancePyramid) -> Result<()> {
        if series.dim != self.input_dim {
            return Err(Error::shape("link_ode_forward", format!("model expects D={}, got {}", self.input_dim, series.dim)));
        }
        if pyramid.num_levels() != self.levels {
            return Err(Error::usage(format!(
                "pyramid for `{}` has {} levels, model expects {}",
                pyramid.query_id,
                pyramid.num_levels(),
                self.levels
            )));
        }
        for level in &pyramid.levels {
            if level.trajectory.shape() != [series.len(), self.latent] {
                return Err(Error::usage(format!(
                    "pyramid trajectory {:?} does not match grid [{}, {}]",
                    level.trajectory.shape(),
                    series.len(),
                    self.latent
                )));
            }
        }
        Ok(())
    }

    fn run(&self, tape: &mut Tape, store: &ParameterStore, series: &SeriesView<'_>, pyramid: &ImportancePyramid) -> Result<Vec<Step>> {
        self.check(series, pyramid)?;
        let w = tape.param(store, self.level_weights);
        let w = tape.repeat_each(w, self.latent)?;
        let wc = tape.param(store, self.gap_weight);
        let g = tape.param(store, self.gap_gate);
        let gate = tape.sigmoid(g)?;
        let mut h = tape.input(Array::zeros(&[self.hidden]));
        let mut steps = Vec::with_capacity(series.len());
        for i in 0..series.len() {
            if i > 0 {
                h = evolve(tape, store, &self.dynamics, h, series.t[i - 1], series.t[i], &self.solver)?;
            }
            let own = h;
            let raw: Vec<f64> = pyramid.levels.iter().flat_map(|l| l.trajectory.row(i).iter().copied()).collect();
            let raw = tape.vector(raw);
            let p = tape.mul(w, raw)?;
            if series.observed(i) {
                let xm = tape.vector(cell_input(series, i));
                let input = tape.concat(&[p, xm])?;
                h = self.cell.forward(tape, store, h, input)?;
            } else {
                let inj = tape.matvec(wc, p)?;
                let inj = tape.scale_by(inj, gate)?;
                h = tape.add(h, inj)?;
            }
            steps.push(Step { own, cross: p, fused: h });
        }
        Ok(steps)
    }

    /// Fused hidden state after every grid step, as tape variables.
    pub fn states_tape(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        series: &SeriesView<'_>,
        pyramid: &ImportancePyramid,
    ) -> Result<Vec<Var>> {
        Ok(self.run(tape, store, series, pyramid)?.into_iter().map(|s| s.fused).collect())
    }

    pub fn trace(&self, store: &ParameterStore, series: &SeriesView<'_>, pyramid: &ImportancePyramid) -> Result<Vec<LinkState>> {
        let mut tape = Tape::new();
        let steps = self.run(&mut tape, store, series, pyramid)?;
        Ok(steps
            .iter()
            .zip(series.t)
            .map(|(s, &t)| LinkState {
                own: HiddenState { value: tape.data(s.own).to_vec(), time: t },
                cross: tape.data(s.cross).to_vec(),
                fused: HiddenState { value: tape.data(s.fused).to_vec(), time: t },
            })
            .collect())
    }

    pub fn states(&self, store: &ParameterStore, series: &SeriesView<'_>, pyramid: &ImportancePyramid) -> Result<Vec<HiddenState>> {
        Ok(self.trace(store, series, pyramid)?.into_iter().map(|s| s.fused).collect())
    }

    /// Zeroes the level weights and the gap injection, silencing the cross path.
    pub fn silence_cross_path(&self, store: &mut ParameterStore) {
        store.value_mut(self.level_weights).data_mut().fill(0.0);
        store.value_mut(self.gap_weight).data_mut().fill(0.0);
    }

    /// ODE-RNN sharing this model's own-state parameters: the cell keeps only the
    /// columns that read `x ⊙ m` and `m`.
    pub fn reduced_ode_rnn(&self, store: &ParameterStore) -> Result<(OdeRnn, ParameterStore)> {
        let mut out = ParameterStore::new();
        let mut rng = crate::seeding::stream(0, "reduced");
        let units = self.dynamics.layers[0].output;
        let rnn = OdeRnn::new(&mut out, "reduced", self.input_dim, self.hidden, Some(units), self.solver, &mut rng)?;
        let ctx = self.levels * self.latent;
        let width = self.cell.input;
        for (src, dst) in [(self.cell.w_z, rnn.cell.w_z), (self.cell.w_r, rnn.cell.w_r), (self.cell.w_n, rnn.cell.w_n)] {
            let v = store.value(src).data();
            let cols: Vec<f64> = (0..self.hidden).flat_map(|r| v[r * width + ctx..(r + 1) * width].iter().copied()).collect();
            out.value_mut(dst).data_mut().copy_from_slice(&cols);
        }
        let pairs = [
            (self.cell.u_z, rnn.cell.u_z),
            (self.cell.u_r, rnn.cell.u_r),
            (self.cell.u_n, rnn.cell.u_n),
            (self.cell.b_z, rnn.cell.b_z),
            (self.cell.b_r, rnn.cell.b_r),
            (self.cell.b_n, rnn.cell.b_n),
        ];
        let dynamics = rnn.dynamics.as_ref().expect("built with dynamics");
        let layer_pairs = self
            .dynamics
            .layers
            .iter()
            .zip(&dynamics.layers)
            .flat_map(|(a, b)| [(a.weight, b.weight), (a.bias, b.bias)]);
        for (src, dst) in pairs.into_iter().chain(layer_pairs) {
            out.value_mut(dst).data_mut().copy_from_slice(store.value(src).data());
        }
        Ok((rnn, out))
    }
}

/// Looks up the pyramid of every sample of `batch` by id.
pub fn pyramids_for<'a>(batch: &TimeSeriesBatch, set: &'a PyramidSet) -> Result<Vec<&'a ImportancePyramid>> {
    batch
        .ids()
        .iter()
        .map(|id| {
            set.pyramids
                .iter()
                .find(|p| &p.query_id == id)
                .ok_or_else(|| Error::MissingArtifact(format!("no pyramid for sample `{id}`")))
        })
        .collect()
}

pub fn link_ode_forward(
    model: &LinkOde,
    store: &ParameterStore,
    batch: &TimeSeriesBatch,
    pyramids: &PyramidSet,
) -> Result<Vec<Vec<HiddenState>>> {
    let pyr = pyramids_for(batch, pyramids)?;
    (0..batch.samples())
        .into_par_iter()
        .map(|k| model.states(store, &batch.sample(k), pyr[k]).map_err(|e| e.in_sample(k)))
        .collect()
}

/// Everything inference needs.
#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub model: LinkOde,
    pub head: OutputHead,
    pub store: ParameterStore,
    pub bank: TrajectoryBank,
    pub pyramids: PyramidSet,
}

/// Per-step outputs of every sample, `[n · D_out]` each.
pub fn seqlink_predict(bundle: &ModelBundle, batch: &TimeSeriesBatch) -> Result<Vec<Vec<f64>>> {
    let states = link_ode_forward(&bundle.model, &bundle.store, batch, &bundle.pyramids)?;
    Ok(states
        .iter()
        .map(|seq| seq.iter().flat_map(|h| predict(&bundle.head, &bundle.store, h)).collect())
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkCheckpoint {
    pub format_version: u32,
    pub model: LinkOde,
    pub head: OutputHead,
    pub params: Checkpoint,
    pub bank_path: PathBuf,
    pub pyramid_path: PathBuf,
    pub config_hash: String,
}

impl LinkCheckpoint {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|_| Error::MissingArtifact(format!("missing checkpoint `{}`", path.display())))?;
        let ckpt: Self = serde_json::from_str(&text)?;
        if ckpt.format_version != Self::FORMAT_VERSION {
            return Err(Error::FormatVersion { found: ckpt.format_version, expected: Self::FORMAT_VERSION });
        }
        Ok(ckpt)
    }

    /// Restores parameters and reads the bank and pyramid files it points to.
    pub fn into_bundle(self) -> Result<ModelBundle> {
        let bank = TrajectoryBank::load(&self.bank_path)?;
        let pyramids = PyramidSet::load(&self.pyramid_path)?;
        Ok(ModelBundle {
            model: self.model,
            head: self.head,
            store: ParameterStore::from_checkpoint(self.params)?,
            bank,
            pyramids,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_gaussian_periodic, Series, TargetKind};
    use crate::odesolve::Method;
    use crate::pyramid::{pyramidal_sort, Level, SplitRule};
    use crate::recurrent::Task;
    use crate::seeding;

    fn bank(k: usize, n: usize, h: usize, seed: u64) -> TrajectoryBank {
        let mut rng = seeding::stream(seed, "bank");
        let data = (0..k * n * h).map(|_| rng.random_range(-1.0..1.0)).collect();
        TrajectoryBank::new(
            (0..k).map(|i| format!("b{i}")).collect(),
            (0..n).map(|i| i as f64 / n as f64).collect(),
            Array::new(vec![k, n, h], data).unwrap(),
        )
        .unwrap()
    }

    fn pyramid(bk: &TrajectoryBank, levels: usize, seed: u64) -> ImportancePyramid {
        let mut rng = seeding::stream(seed, "alpha");
        let alpha: Vec<f64> = (0..bk.len()).map(|_| rng.random_range(0.0..1.0)).collect();
        let cand: Vec<usize> = (0..bk.len()).collect();
        pyramidal_sort("q", &alpha, &cand, bk, levels, SplitRule::RemainingMean).unwrap()
    }

    /// Fresh model with random cross-path weights, so every path is exercised.
    fn model(levels: usize, seed: u64) -> (ParameterStore, LinkOde) {
        let mut store = ParameterStore::new();
        let m = LinkOde::new(&mut store, 1, 4, 3, levels, 6, SolverOptions::fixed(Method::Rk4, 2), &mut seeding::stream(seed, "i"))
            .unwrap();
        let mut rng = seeding::stream(seed, "cross");
        let ctx = levels * 3;
        for id in [m.cell.w_z, m.cell.w_r, m.cell.w_n] {
            let width = m.cell.input;
            for (k, v) in store.value_mut(id).data_mut().iter_mut().enumerate() {
                if k % width < ctx {
                    *v = rng.random_range(-0.5..0.5);
                }
            }
        }
        for v in store.value_mut(m.gap_weight).data_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
        (store, m)
    }

    #[test]
    fn fresh_model_matches_the_paired_ode_rnn() {
        let solver = SolverOptions::fixed(Method::Rk4, 2);
        let mut a = ParameterStore::new();
        let link = LinkOde::new(&mut a, 1, 4, 3, 2, 6, solver, &mut seeding::stream(5, "init")).unwrap();
        let mut b = ParameterStore::new();
        let rnn = OdeRnn::new(&mut b, "m", 1, 4, Some(6), solver, &mut seeding::stream(5, "init")).unwrap();
        let bk = bank(4, 9, 3, 5);
        let p = pyramid(&bk, 2, 5);
        let s = series(6, 9, 0.5);
        let x = link.states(&a, &s.view(), &p).unwrap();
        let y = rnn.states(&b, &s.view()).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn level_combine_examples() {
        let bk = bank(6, 5, 3, 1);
        let mut p = pyramid(&bk, 3, 2);
        let base = level_combine(&p, 2);
        assert_eq!(base.p.shape(), &[3, 3]);
        p.weights = vec![0.0; 3];
        assert!(level_combine(&p, 2).flat().iter().all(|v| *v == 0.0));
        p.weights = vec![1.0, 2.0, 1.0];
        let doubled = level_combine(&p, 2);
        p.weights = vec![1.0, 1.0, 1.0];
        let single = level_combine(&p, 2);
        assert_eq!(doubled.p.row(0), single.p.row(0));
        assert_eq!(doubled.p.row(2), single.p.row(2));
        for (a, b) in doubled.p.row(1).iter().zip(single.p.row(1)) {
            assert_eq!(*a, 2.0 * b);
        }
        let one = pyramidal_sort("q", &[0.3, 0.1, 0.2, 0.4, 0.5, 0.6], &[0, 1, 2, 3, 4, 5], &bk, 1, SplitRule::RemainingMean).unwrap();
        let ctx = level_combine(&one, 4);
        for d in 0..3 {
            let mean = (0..6).map(|c| bk.at(c, 4)[d]).sum::<f64>() / 6.0;
            assert!((ctx.flat()[d] - mean).abs() < 1e-15);
        }
    }

    fn series(seed: u64, n: usize, observed: f64) -> Series {
        let mut rng = seeding::stream(seed, "series");
        let m: Vec<f64> = (0..n).map(|_| if rng.random_bool(observed) { 1.0 } else { 0.0 }).collect();
        Series {
            x: m.iter().map(|mk| mk * rng.random_range(-1.0..1.0)).collect(),
            m,
            t: (0..n).map(|i| i as f64 / n as f64).collect(),
            dim: 1,
            target: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            target_mask: vec![1.0; n],
            out_dim: 1,
            target_kind: TargetKind::NextValue,
        }
    }

    #[test]
    fn silenced_cross_path_reduces_to_ode_rnn() {
        for seed in 0..5 {
            let bk = bank(5, 8, 3, seed);
            let p = pyramid(&bk, 2, seed);
            let (mut store, link) = model(2, seed);
            link.silence_cross_path(&mut store);
            let (rnn, rstore) = link.reduced_ode_rnn(&store).unwrap();
            let s = series(seed, 8, 0.6);
            let a = link.states(&store, &s.view(), &p).unwrap();
            let b = rnn.states(&rstore, &s.view()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn gap_states_see_the_cross_context() {
        let bk = bank(5, 10, 3, 3);
        let p = pyramid(&bk, 2, 3);
        let (mut store, link) = model(2, 3);
        store.value_mut(link.gap_gate).data_mut()[0] = 2.0;
        let mut s = series(4, 10, 1.0);
        for i in 3..8 {
            s.m[i] = 0.0;
            s.x[i] = 0.0;
        }
        let trace = link.trace(&store, &s.view(), &p).unwrap();
        let mut silent = store.clone();
        link.silence_cross_path(&mut silent);
        let (rnn, rstore) = link.reduced_ode_rnn(&silent).unwrap();
        let plain = rnn.states(&rstore, &s.view()).unwrap();
        for i in 3..8 {
            assert_ne!(trace[i].fused.value, plain[i].value);
            assert_ne!(trace[i].fused.value, trace[i].own.value);
        }
        for i in [0, 1, 2, 8, 9] {
            // Observed steps go through the cell, never through the gap injection.
            assert_ne!(trace[i].cross, vec![0.0; 6]);
        }
    }

    #[test]
    fn unobserved_values_are_invisible() {
        let bk = bank(5, 8, 3, 5);
        let p = pyramid(&bk, 3, 5);
        let (mut store, link) = model(3, 5);
        store.value_mut(link.gap_gate).data_mut()[0] = 0.0;
        let a = series(6, 8, 0.5);
        let mut b = a.clone();
        for (x, m) in b.x.iter_mut().zip(&a.m) {
            if *m == 0.0 {
                *x = -77.0;
            }
        }
        assert_eq!(link.states(&store, &a.view(), &p).unwrap(), link.states(&store, &b.view(), &p).unwrap());
    }

    #[test]
    fn pyramid_shape_mismatch_is_a_usage_error() {
        let bk = bank(5, 8, 3, 7);
        let (store, link) = model(2, 7);
        let wrong_levels = pyramid(&bk, 3, 7);
        assert!(matches!(link.states(&store, &series(1, 8, 1.0).view(), &wrong_levels), Err(Error::Usage(_))));
        let ok = pyramid(&bk, 2, 7);
        assert!(matches!(link.states(&store, &series(1, 6, 1.0).view(), &ok), Err(Error::Usage(_))));
    }

    #[test]
    fn full_step_gradient_matches_finite_differences() {
        let bk = bank(4, 7, 3, 8);
        let p = pyramid(&bk, 2, 8);
        let (mut store, link) = model(2, 8);
        store.value_mut(link.gap_gate).data_mut()[0] = 0.3;
        let head = OutputHead::new(&mut store, "head", 4, 1, Task::Regression, &mut seeding::stream(8, "h")).unwrap();
        let s = series(9, 7, 0.6);
        let loss_at = |store: &ParameterStore| -> (Tape, Var) {
            let mut tape = Tape::new();
            let states = link.states_tape(&mut tape, store, &s.view(), &p).unwrap();
            let l = head.loss(&mut tape, store, &states, &s.target, &s.target_mask).unwrap();
            (tape, l)
        };
        let (tape, l) = loss_at(&store);
        let grads = tape.backward(l).unwrap().into_gradients();
        for id in store.ids().collect::<Vec<_>>() {
            let analytic = grads.get(id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; store.value(id).len()]);
            let mut probe = store.clone();
            let mut f = |v: &[f64]| {
                probe.value_mut(id).data_mut().copy_from_slice(v);
                let (tape, l) = loss_at(&probe);
                tape.data(l)[0]
            };
            let numeric = crate::diffcore::finite_difference(&mut f, store.value(id).data(), 1e-6);
            for (a, b) in analytic.iter().zip(&numeric) {
                let err = crate::diffcore::relative_error(*a, *b, 1e-4);
                assert!(err < 1e-3, "{}: {a} vs {b}", store.name(id));
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_and_missing_artifacts() {
        let b = generate_gaussian_periodic(3, 5, 1).unwrap();
        let bk = TrajectoryBank::new(b.ids().to_vec(), b.times().to_vec(), bank(3, 5, 3, 1).trajectories).unwrap();
        let pyramids = PyramidSet {
            format_version: PyramidSet::FORMAT_VERSION,
            levels: 1,
            rule: SplitRule::RemainingMean,
            bank_ids: bk.sample_ids.clone(),
            pyramids: (0..3)
                .map(|q| {
                    let cand: Vec<usize> = (0..3).filter(|c| *c != q).collect();
                    pyramidal_sort(&b.ids()[q], &[0.2, 0.3, 0.5], &cand, &bk, 1, SplitRule::RemainingMean).unwrap()
                })
                .collect(),
        };
        let (mut store, link) = model(1, 2);
        let head = OutputHead::new(&mut store, "head", 4, 1, Task::Regression, &mut seeding::stream(2, "h")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (bank_path, pyr_path) = (dir.path().join("bank.json"), dir.path().join("pyr.json"));
        bk.save(&bank_path).unwrap();
        pyramids.save(&pyr_path).unwrap();
        let ckpt = LinkCheckpoint {
            format_version: LinkCheckpoint::FORMAT_VERSION,
            model: link.clone(),
            head: head.clone(),
            params: store.to_checkpoint(),
            bank_path: bank_path.clone(),
            pyramid_path: pyr_path,
            config_hash: "abc".into(),
        };
        let path = dir.path().join("ckpt.json");
        ckpt.save(&path).unwrap();
        let bundle = LinkCheckpoint::load(&path).unwrap().into_bundle().unwrap();
        let first = seqlink_predict(&bundle, &b).unwrap();
        assert_eq!(first, seqlink_predict(&bundle, &b).unwrap());
        let direct = ModelBundle { model: link, head, store, bank: bk, pyramids };
        assert_eq!(first, seqlink_predict(&direct, &b).unwrap());

        let mut zero = bundle.clone();
        zero.store.value_mut(zero.head.dense.weight).data_mut().fill(0.0);
        assert!(seqlink_predict(&zero, &b).unwrap().iter().flatten().all(|v| *v == 0.0));

        std::fs::remove_file(&bank_path).unwrap();
        match LinkCheckpoint::load(&path).unwrap().into_bundle() {
            Err(Error::MissingArtifact(msg)) => assert!(msg.contains("trajectory bank"), "{msg}"),
            other => panic!("{:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn empty_level_contributes_zero_context() {
        let bk = bank(3, 4, 3, 9);
        let p = ImportancePyramid {
            query_id: "q".into(),
            levels: vec![
                Level { member_ids: vec![], members: vec![], trajectory: Array::zeros(&[4, 3]) },
                Level { member_ids: vec!["b0".into()], members: vec![0], trajectory: Array::matrix(4, 3, bk.trajectory(0).to_vec()).unwrap() },
            ],
            weights: vec![0.5, 1.0],
        };
        let ctx = level_combine(&p, 1);
        assert_eq!(ctx.p.row(0), &[0.0; 3]);
        assert_eq!(ctx.p.row(1), bk.at(0, 1));
    }
}
