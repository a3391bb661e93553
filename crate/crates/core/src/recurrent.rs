//! GRU cell, the ODE-RNN recursion and output heads.
//!
//! Between consecutive grid points the hidden state follows the learned
//! dynamics; at a step where any feature is observed, the cell consumes the
//! evolved state together with `concat(x ⊙ m, m)`. Without dynamics the
//! state is simply held across gaps, which gives the plain RNN baseline.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{SeriesView, TimeSeriesBatch};
use crate::diffcore::{Activation, Array, Dense, ParamId, ParameterStore, Tape, Var};
use crate::error::{Error, Result};
use crate::odesolve::{integrate, OdeDynamics, SolverOptions, TapeSystem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiddenState {
    pub value: Vec<f64>,
    pub time: f64,
}

/// Gate weights of a GRU cell: `W·: [H, D_in]`, `U·: [H, H]`, `b·: [H]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub hidden: usize,
    pub input: usize,
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub b_z: ParamId,
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub b_r: ParamId,
    pub w_n: ParamId,
    pub u_n: ParamId,
    pub b_n: ParamId,
}

impl CellParams {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut w = |g: &str, store: &mut ParameterStore| {
            store.add_uniform(format!("{prefix}.w_{g}"), &[hidden, input], input, rng)
        };
        let (w_z, w_r, w_n) = (w("z", store)?, w("r", store)?, w("n", store)?);
        let mut u = |g: &str, store: &mut ParameterStore| {
            store.add_uniform(format!("{prefix}.u_{g}"), &[hidden, hidden], hidden, rng)
        };
        let (u_z, u_r, u_n) = (u("z", store)?, u("r", store)?, u("n", store)?);
        let mut b = |g: &str| store.add(format!("{prefix}.b_{g}"), Array::zeros(&[hidden]));
        let (b_z, b_r, b_n) = (b("z")?, b("r")?, b("n")?);
        Ok(Self { hidden, input, w_z, u_z, b_z, w_r, u_r, b_r, w_n, u_n, b_n })
    }

    pub fn param_ids(&self) -> [ParamId; 9] {
        [self.w_z, self.u_z, self.b_z, self.w_r, self.u_r, self.b_r, self.w_n, self.u_n, self.b_n]
    }

    fn gate(&self, tape: &mut Tape, store: &ParameterStore, w: ParamId, u: ParamId, b: ParamId, x: Var, h: Var) -> Result<Var> {
        let (w, u, b) = (tape.param(store, w), tape.param(store, u), tape.param(store, b));
        let wx = tape.matvec(w, x)?;
        let uh = tape.matvec(u, h)?;
        let s = tape.add(wx, uh)?;
        tape.add(s, b)
    }

    /// `h' = (1 − z) ⊙ n + z ⊙ h`.
    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, h: Var, x: Var) -> Result<Var> {
        if tape.shape(h) != [self.hidden] || tape.shape(x) != [self.input] {
            return Err(Error::shape(
                "cell_update",
                format!(
                    "expected h [{}] and x [{}], got {:?} and {:?}",
                    self.hidden,
                    self.input,
                    tape.shape(h),
                    tape.shape(x)
                ),
            ));
        }
        let z = self.gate(tape, store, self.w_z, self.u_z, self.b_z, x, h)?;
        let z = tape.sigmoid(z)?;
        let r = self.gate(tape, store, self.w_r, self.u_r, self.b_r, x, h)?;
        let r = tape.sigmoid(r)?;
        let rh = tape.mul(r, h)?;
        let n = self.gate(tape, store, self.w_n, self.u_n, self.b_n, x, rh)?;
        let n = tape.tanh(n)?;
        let diff = tape.sub(h, n)?;
        let zd = tape.mul(z, diff)?;
        tape.add(n, zd)
    }
}

pub fn cell_update(cell: &CellParams, store: &ParameterStore, h: &HiddenState, x: &[f64]) -> Result<HiddenState> {
    let mut tape = Tape::new();
    let hv = tape.vector(h.value.clone());
    let xv = tape.vector(x.to_vec());
    let out = cell.forward(&mut tape, store, hv, xv)?;
    Ok(HiddenState { value: tape.data(out).to_vec(), time: h.time })
}

/// Evolves `h` from `t0` to `t1` on the tape.
pub fn evolve(
    tape: &mut Tape,
    store: &ParameterStore,
    dynamics: &OdeDynamics,
    h: Var,
    t0: f64,
    t1: f64,
    solver: &SolverOptions,
) -> Result<Var> {
    let mut sys = TapeSystem { tape, store, dynamics };
    let res = integrate(&mut sys, &h, &[t0, t1], solver)?;
    Ok(*res.states.last().expect("two output times"))
}

/// `concat(x ⊙ m, m)` at step `i`.
pub fn cell_input(series: &SeriesView<'_>, i: usize) -> Vec<f64> {
    let mut v = series.masked_values_at(i);
    v.extend_from_slice(series.mask_at(i));
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeRnn {
    pub input_dim: usize,
    pub hidden: usize,
    pub cell: CellParams,
    /// `None` holds the state constant across gaps (plain RNN).
    pub dynamics: Option<OdeDynamics>,
    pub solver: SolverOptions,
}

impl OdeRnn {
    /// Registers `{prefix}.cell.*` and, when `ode_units` is given, `{prefix}.ode.*`.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        ode_units: Option<usize>,
        solver: SolverOptions,
        rng: &mut R,
    ) -> Result<Self> {
        let cell = CellParams::new(store, &format!("{prefix}.cell"), 2 * input_dim, hidden, rng)?;
        let dynamics = match ode_units {
            Some(units) => Some(OdeDynamics::new(store, &format!("{prefix}.ode"), hidden, units, 1, rng)?),
            None => None,
        };
        Ok(Self { input_dim, hidden, cell, dynamics, solver })
    }

    /// Hidden state after every grid step, as tape variables.
    pub fn states_tape(&self, tape: &mut Tape, store: &ParameterStore, series: &SeriesView<'_>) -> Result<Vec<Var>> {
        if series.dim != self.input_dim {
            return Err(Error::shape("ode_rnn_forward", format!("model expects D={}, got {}", self.input_dim, series.dim)));
        }
        let mut h = tape.input(Array::zeros(&[self.hidden]));
        let mut states = Vec::with_capacity(series.len());
        for i in 0..series.len() {
            if i > 0 {
                if let Some(dynamics) = &self.dynamics {
                    h = evolve(tape, store, dynamics, h, series.t[i - 1], series.t[i], &self.solver)?;
                }
            }
            if series.observed(i) {
                let x = tape.vector(cell_input(series, i));
                h = self.cell.forward(tape, store, h, x)?;
            }
            states.push(h);
        }
        Ok(states)
    }

    pub fn states(&self, store: &ParameterStore, series: &SeriesView<'_>) -> Result<Vec<HiddenState>> {
        let mut tape = Tape::new();
        let vars = self.states_tape(&mut tape, store, series)?;
        Ok(vars
            .iter()
            .zip(series.t)
            .map(|(v, t)| HiddenState { value: tape.data(*v).to_vec(), time: *t })
            .collect())
    }
}

/// Runs the recursion on every sample in parallel.
pub fn ode_rnn_forward(model: &OdeRnn, store: &ParameterStore, batch: &TimeSeriesBatch) -> Result<Vec<Vec<HiddenState>>> {
    (0..batch.samples())
        .into_par_iter()
        .map(|k| model.states(store, &batch.sample(k)).map_err(|e| e.in_sample(k)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    BinaryClassification,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputHead {
    pub dense: Dense,
    pub task: Task,
}

impl OutputHead {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        prefix: &str,
        hidden: usize,
        out_dim: usize,
        task: Task,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self { dense: Dense::new(store, prefix, hidden, out_dim, Activation::Identity, rng)?, task })
    }

    /// Affine output before any sigmoid.
    pub fn logits(&self, tape: &mut Tape, store: &ParameterStore, h: Var) -> Result<Var> {
        self.dense.forward(tape, store, h)
    }

    /// Loss of the per-step outputs at `states` against `target`, counting only entries where `mask` is 1.
    pub fn loss(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        states: &[Var],
        target: &[f64],
        mask: &[f64],
    ) -> Result<Var> {
        let outs = states.iter().map(|h| self.logits(tape, store, *h)).collect::<Result<Vec<_>>>()?;
        let z = tape.concat(&outs)?;
        match self.task {
            Task::Regression => tape.masked_mse(z, target, mask),
            Task::BinaryClassification => tape.bce_with_logits(z, target, mask),
        }
    }
}

pub fn predict(head: &OutputHead, store: &ParameterStore, h: &HiddenState) -> Vec<f64> {
    let z = head.dense.apply(store, &h.value);
    match head.task {
        Task::Regression => z,
        Task::BinaryClassification => z.into_iter().map(crate::diffcore::sigmoid_scalar).collect(),
    }
}

/// Which steps contribute to the loss and to evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Every step with a target.
    #[default]
    PerStep,
    /// Only the last step carrying a target.
    Final,
}

impl TargetMode {
    /// Restricts `mask` (shaped `[n, out_dim]`) to the steps this mode scores.
    pub fn restrict(self, mask: &[f64], out_dim: usize) -> Vec<f64> {
        match self {
            TargetMode::PerStep => mask.to_vec(),
            TargetMode::Final => {
                let n = mask.len() / out_dim.max(1);
                let last = (0..n).rev().find(|&i| mask[i * out_dim..(i + 1) * out_dim].iter().any(|v| *v != 0.0));
                let mut out = vec![0.0; mask.len()];
                if let Some(i) = last {
                    out[i * out_dim..(i + 1) * out_dim].copy_from_slice(&mask[i * out_dim..(i + 1) * out_dim]);
                }
                out
            }
        }
    }
}
