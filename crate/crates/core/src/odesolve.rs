//! Integration of `dh/dt = f(h, t)` with fixed-step Euler/RK4 and adaptive
//! Dormand–Prince 5(4).
//!
//! The integrators are generic over [`OdeSystem`], so the same code runs on
//! plain `Vec<f64>` states and on tape variables. A solve on a [`TapeSystem`]
//! records every accepted and rejected stage, and gradients flow back through
//! the discrete steps.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Activation, Dense, ParameterStore, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Euler,
    Rk4,
    Dopri5,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Method::Euler),
            "rk4" => Ok(Method::Rk4),
            "dopri5" => Ok(Method::Dopri5),
            other => Err(Error::usage(format!("unknown solver method `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Equal steps per output interval for the fixed-step methods.
    pub substeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { method: Method::Rk4, rtol: 1e-3, atol: 1e-4, max_steps: 100_000, substeps: 4 }
    }
}

impl SolverOptions {
    pub fn fixed(method: Method, substeps: usize) -> Self {
        Self { method, substeps, ..Self::default() }
    }

    pub fn dopri5(rtol: f64, atol: f64) -> Self {
        Self { method: Method::Dopri5, rtol, atol, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::usage("rtol and atol must be positive"));
        }
        if self.max_steps == 0 || self.substeps == 0 {
            return Err(Error::usage("max_steps and substeps must be positive"));
        }
        Ok(())
    }
}

/// A right-hand side together with the state algebra the integrators need.
pub trait OdeSystem {
    type State: Clone;

    fn derivative(&mut self, t: f64, h: &Self::State) -> Result<Self::State>;

    /// `base + Σ cᵢ·termᵢ`.
    fn lin_comb(&mut self, base: &Self::State, terms: &[(f64, &Self::State)]) -> Result<Self::State>;

    fn values(&self, h: &Self::State) -> Vec<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub h: f64,
    pub accepted: bool,
    pub error_norm: f64,
}

#[derive(Clone, Debug)]
pub struct SolveResult<S> {
    /// One state per requested output time; `states[0]` is the initial state.
    pub states: Vec<S>,
    /// Adaptive step history (empty for fixed-step methods).
    pub step_log: Vec<StepRecord>,
}

/// Integrates `system` from `h0` through each of `times`, which must be strictly ascending.
pub fn integrate<S: OdeSystem>(
    system: &mut S,
    h0: &S::State,
    times: &[f64],
    opts: &SolverOptions,
) -> Result<SolveResult<S::State>> {
    opts.validate()?;
    if times.is_empty() {
        return Err(Error::usage("at least one output time is required"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::usage("output times must be strictly ascending"));
    }
    let mut states = Vec::with_capacity(times.len());
    states.push(h0.clone());
    let mut log = Vec::new();
    let mut ctl = StepControl { steps: 0, next_h: None };
    for w in times.windows(2) {
        let start = states.last().expect("nonempty").clone();
        let end = match opts.method {
            Method::Euler | Method::Rk4 => fixed_interval(system, start, w[0], w[1], opts, &mut ctl)?,
            Method::Dopri5 => dopri5_interval(system, start, w[0], w[1], opts, &mut ctl, &mut log)?,
        };
        states.push(end);
    }
    Ok(SolveResult { states, step_log: log })
}

struct StepControl {
    steps: usize,
    next_h: Option<f64>,
}

impl StepControl {
    fn count(&mut self, t: f64, max_steps: usize) -> Result<()> {
        self.steps += 1;
        if self.steps > max_steps {
            return Err(Error::NonConvergence { t, max_steps });
        }
        Ok(())
    }
}

fn check_finite<S: OdeSystem>(system: &S, h: &S::State, t: f64) -> Result<()> {
    if system.values(h).iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { t })
    }
}

fn diverged(t: f64) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { .. } => Error::Divergence { t },
        other => other,
    }
}

fn fixed_interval<S: OdeSystem>(
    system: &mut S,
    mut y: S::State,
    a: f64,
    b: f64,
    opts: &SolverOptions,
    ctl: &mut StepControl,
) -> Result<S::State> {
    let n = opts.substeps;
    let dt = (b - a) / n as f64;
    for s in 0..n {
        let t = a + s as f64 * dt;
        ctl.count(t, opts.max_steps)?;
        y = match opts.method {
            Method::Euler => {
                let k1 = system.derivative(t, &y).map_err(diverged(t))?;
                system.lin_comb(&y, &[(dt, &k1)]).map_err(diverged(t))?
            }
            _ => rk4_step(system, &y, t, dt).map_err(diverged(t))?,
        };
        check_finite(system, &y, t + dt)?;
    }
    Ok(y)
}

fn rk4_step<S: OdeSystem>(system: &mut S, y: &S::State, t: f64, dt: f64) -> Result<S::State> {
    let k1 = system.derivative(t, y)?;
    let y2 = system.lin_comb(y, &[(0.5 * dt, &k1)])?;
    let k2 = system.derivative(t + 0.5 * dt, &y2)?;
    let y3 = system.lin_comb(y, &[(0.5 * dt, &k2)])?;
    let k3 = system.derivative(t + 0.5 * dt, &y3)?;
    let y4 = system.lin_comb(y, &[(dt, &k3)])?;
    let k4 = system.derivative(t + dt, &y4)?;
    let w = dt / 6.0;
    system.lin_comb(y, &[(w, &k1), (2.0 * w, &k2), (2.0 * w, &k3), (w, &k4)])
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
const B5: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
/// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

fn rms_scaled(v: &[f64], scale: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().zip(scale).map(|(x, s)| (x / s).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn initial_step<S: OdeSystem>(
    system: &mut S,
    y0: &S::State,
    f0: &S::State,
    t0: f64,
    opts: &SolverOptions,
) -> Result<f64> {
    let yv = system.values(y0);
    let fv = system.values(f0);
    let scale: Vec<f64> = yv.iter().map(|y| opts.atol + opts.rtol * y.abs()).collect();
    let d0 = rms_scaled(&yv, &scale);
    let d1 = rms_scaled(&fv, &scale);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1 = system.lin_comb(y0, &[(h0, f0)])?;
    let f1 = system.derivative(t0 + h0, &y1)?;
    let f1v = system.values(&f1);
    let diff: Vec<f64> = f1v.iter().zip(&fv).map(|(a, b)| a - b).collect();
    let d2 = rms_scaled(&diff, &scale) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    Ok((100.0 * h0).min(h1))
}

fn dopri5_interval<S: OdeSystem>(
    system: &mut S,
    mut y: S::State,
    a: f64,
    b: f64,
    opts: &SolverOptions,
    ctl: &mut StepControl,
    log: &mut Vec<StepRecord>,
) -> Result<S::State> {
    let mut t = a;
    let mut k1 = system.derivative(t, &y).map_err(diverged(t))?;
    let mut h = match ctl.next_h {
        Some(h) => h,
        None => initial_step(system, &y, &k1, t, opts).map_err(diverged(t))?,
    };
    while t < b {
        ctl.count(t, opts.max_steps)?;
        let remaining = b - t;
        let hits_end = h >= remaining * (1.0 - 1e-12);
        let step = if hits_end { remaining } else { h };

        let y2 = system.lin_comb(&y, &[(step * A2[0], &k1)]).map_err(diverged(t))?;
        let k2 = system.derivative(t + C[1] * step, &y2).map_err(diverged(t))?;
        let y3 = system.lin_comb(&y, &[(step * A3[0], &k1), (step * A3[1], &k2)]).map_err(diverged(t))?;
        let k3 = system.derivative(t + C[2] * step, &y3).map_err(diverged(t))?;
        let y4 = system
            .lin_comb(&y, &[(step * A4[0], &k1), (step * A4[1], &k2), (step * A4[2], &k3)])
            .map_err(diverged(t))?;
        let k4 = system.derivative(t + C[3] * step, &y4).map_err(diverged(t))?;
        let y5 = system
            .lin_comb(
                &y,
                &[(step * A5[0], &k1), (step * A5[1], &k2), (step * A5[2], &k3), (step * A5[3], &k4)],
            )
            .map_err(diverged(t))?;
        let k5 = system.derivative(t + C[4] * step, &y5).map_err(diverged(t))?;
        let y6 = system
            .lin_comb(
                &y,
                &[
                    (step * A6[0], &k1),
                    (step * A6[1], &k2),
                    (step * A6[2], &k3),
                    (step * A6[3], &k4),
                    (step * A6[4], &k5),
                ],
            )
            .map_err(diverged(t))?;
        let k6 = system.derivative(t + step, &y6).map_err(diverged(t))?;
        let y_new = system
            .lin_comb(
                &y,
                &[
                    (step * B5[0], &k1),
                    (step * B5[2], &k3),
                    (step * B5[3], &k4),
                    (step * B5[4], &k5),
                    (step * B5[5], &k6),
                ],
            )
            .map_err(diverged(t))?;
        let k7 = system.derivative(t + step, &y_new).map_err(diverged(t))?;

        let ks = [&k1, &k2, &k3, &k4, &k5, &k6, &k7].map(|k| system.values(k));
        let (yv, ynv) = (system.values(&y), system.values(&y_new));
        if !ynv.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { t });
        }
        let mut err_sq = 0.0;
        for i in 0..yv.len() {
            let e: f64 = step * (0..7).map(|j| E[j] * ks[j][i]).sum::<f64>();
            let sc = opts.atol + opts.rtol * yv[i].abs().max(ynv[i].abs());
            err_sq += (e / sc).powi(2);
        }
        let err = if yv.is_empty() { 0.0 } else { (err_sq / yv.len() as f64).sqrt() };
        let factor = if err == 0.0 {
            MAX_FACTOR
        } else {
            (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
        };
        let accepted = err <= 1.0;
        log.push(StepRecord { t, h: step, accepted, error_norm: err });
        if accepted {
            t = if hits_end { b } else { t + step };
            y = y_new;
            k1 = k7;
            // A boundary-clamped step says little about the natural step size.
            h = if hits_end { h.max(step * factor) } else { step * factor };
        } else {
            h = step * factor.min(1.0);
        }
    }
    ctl.next_h = Some(h);
    Ok(y)
}

/// Numeric right-hand side on plain slices.
pub trait Dynamics {
    fn eval(&self, t: f64, h: &[f64]) -> Vec<f64>;
}

/// Wraps a closure as [`Dynamics`].
pub struct FnDynamics<F>(pub F);

impl<F: Fn(f64, &[f64]) -> Vec<f64>> Dynamics for FnDynamics<F> {
    fn eval(&self, t: f64, h: &[f64]) -> Vec<f64> {
        (self.0)(t, h)
    }
}

/// [`OdeSystem`] over `Vec<f64>` states.
pub struct NumericSystem<'a, D: ?Sized>(pub &'a D);

impl<D: Dynamics + ?Sized> OdeSystem for NumericSystem<'_, D> {
    type State = Vec<f64>;

    fn derivative(&mut self, t: f64, h: &Vec<f64>) -> Result<Vec<f64>> {
        let d = self.0.eval(t, h);
        if d.len() != h.len() {
            return Err(Error::shape("dynamics", format!("state {} -> derivative {}", h.len(), d.len())));
        }
        Ok(d)
    }

    fn lin_comb(&mut self, base: &Vec<f64>, terms: &[(f64, &Vec<f64>)]) -> Result<Vec<f64>> {
        let mut out = base.clone();
        for (c, t) in terms {
            for (o, v) in out.iter_mut().zip(t.iter()) {
                *o += c * v;
            }
        }
        Ok(out)
    }

    fn values(&self, h: &Vec<f64>) -> Vec<f64> {
        h.clone()
    }
}

/// Neural dynamics `f_θ(h)`: an MLP from the state back to the state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeDynamics {
    pub dim: usize,
    pub layers: Vec<Dense>,
}

impl OdeDynamics {
    /// `dim -> units (tanh) … -> dim (linear)` with `hidden_layers` hidden layers.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        prefix: &str,
        dim: usize,
        units: usize,
        hidden_layers: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        let mut width = dim;
        for i in 0..hidden_layers {
            layers.push(Dense::new(store, &format!("{prefix}.l{i}"), width, units, Activation::Tanh, rng)?);
            width = units;
        }
        layers.push(Dense::new(store, &format!("{prefix}.out"), width, dim, Activation::Identity, rng)?);
        Ok(Self { dim, layers })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, h: Var) -> Result<Var> {
        let mut x = h;
        for layer in &self.layers {
            x = layer.forward(tape, store, x)?;
        }
        Ok(x)
    }

    pub fn apply(&self, store: &ParameterStore, h: &[f64]) -> Vec<f64> {
        let mut x = h.to_vec();
        for layer in &self.layers {
            x = layer.apply(store, &x);
        }
        x
    }

    /// Sets every weight and bias of the network to zero, making `f ≡ 0`.
    pub fn zero_out(&self, store: &mut ParameterStore) {
        for l in &self.layers {
            store.value_mut(l.weight).data_mut().fill(0.0);
            store.value_mut(l.bias).data_mut().fill(0.0);
        }
    }

    pub fn bind<'a>(&'a self, store: &'a ParameterStore) -> BoundDynamics<'a> {
        BoundDynamics { net: self, store }
    }
}

/// [`OdeDynamics`] paired with the parameter values to evaluate it at.
pub struct BoundDynamics<'a> {
    net: &'a OdeDynamics,
    store: &'a ParameterStore,
}

impl Dynamics for BoundDynamics<'_> {
    fn eval(&self, _t: f64, h: &[f64]) -> Vec<f64> {
        self.net.apply(self.store, h)
    }
}

/// [`OdeSystem`] whose states are tape variables, so solves are differentiable.
pub struct TapeSystem<'a> {
    pub tape: &'a mut Tape,
    pub store: &'a ParameterStore,
    pub dynamics: &'a OdeDynamics,
}

impl OdeSystem for TapeSystem<'_> {
    type State = Var;

    fn derivative(&mut self, _t: f64, h: &Var) -> Result<Var> {
        self.dynamics.forward(self.tape, self.store, *h)
    }

    fn lin_comb(&mut self, base: &Var, terms: &[(f64, &Var)]) -> Result<Var> {
        let terms: Vec<(f64, Var)> = terms.iter().map(|(c, v)| (*c, **v)).collect();
        self.tape.lin_comb(*base, &terms)
    }

    fn values(&self, h: &Var) -> Vec<f64> {
        self.tape.data(*h).to_vec()
    }
}

/// A fully specified numeric solve.
pub struct SolveRequest<'a, D: ?Sized> {
    pub dynamics: &'a D,
    pub initial_state: Vec<f64>,
    pub output_times: Vec<f64>,
    pub options: SolverOptions,
}

pub fn solve<D: Dynamics + ?Sized>(req: &SolveRequest<'_, D>) -> Result<SolveResult<Vec<f64>>> {
    let mut sys = NumericSystem(req.dynamics);
    integrate(&mut sys, &req.initial_state, &req.output_times, &req.options)
}

/// Problem with a known solution, used to measure convergence order.
pub struct TestProblem<'a> {
    pub dynamics: &'a dyn Dynamics,
    pub initial_state: Vec<f64>,
    pub t_end: f64,
    pub exact: &'a dyn Fn(f64) -> Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub step_sizes: Vec<f64>,
    pub errors: Vec<f64>,
    /// Least-squares slope of log(error) against log(step size); `None`
    /// when every error is at round-off level and the slope is meaningless.
    pub order: Option<f64>,
}

/// Measures the empirical order of a fixed-step method over `step_counts`.
pub fn convergence_order(method: Method, problem: &TestProblem<'_>, step_counts: &[usize]) -> Result<ConvergenceReport> {
    if step_counts.len() < 4 {
        return Err(Error::usage("convergence_order needs at least 4 step sizes"));
    }
    let exact = (problem.exact)(problem.t_end);
    let mut step_sizes = Vec::new();
    let mut errors = Vec::new();
    for &n in step_counts {
        let req = SolveRequest {
            dynamics: problem.dynamics,
            initial_state: problem.initial_state.clone(),
            output_times: vec![0.0, problem.t_end],
            options: SolverOptions { method, substeps: n, ..SolverOptions::default() },
        };
        let res = solve(&req)?;
        let last = res.states.last().expect("two output times");
        let err = last.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        step_sizes.push(problem.t_end / n as f64);
        errors.push(err);
    }
    let order = if errors.iter().all(|e| *e < 1e-13) {
        None
    } else {
        let xs: Vec<f64> = step_sizes.iter().map(|h| h.ln()).collect();
        let ys: Vec<f64> = errors.iter().map(|e| e.max(f64::MIN_POSITIVE).ln()).collect();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        Some(sxy / sxx)
    };
    Ok(ConvergenceReport { step_sizes, errors, order })
}
