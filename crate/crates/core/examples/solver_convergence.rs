//! Empirical convergence order of the fixed-step solvers and an adaptive dopri5 solve.

use anyhow::Result;
use seqlink::odesolve::{convergence_order, solve, FnDynamics, Method, SolveRequest, SolverOptions, TestProblem};

fn main() -> Result<()> {
    let decay = FnDynamics(|_t: f64, h: &[f64]| h.iter().map(|v| -v).collect::<Vec<_>>());
    let exact = |t: f64| vec![(-t).exp()];
    let problem = TestProblem { dynamics: &decay, initial_state: vec![1.0], t_end: 1.0, exact: &exact };
    for (method, steps) in [(Method::Euler, [64, 128, 256, 512]), (Method::Rk4, [4, 8, 16, 32])] {
        let r = convergence_order(method, &problem, &steps)?;
        println!("{method:?}: order {:.3}, errors {:?}", r.order.unwrap_or(f64::NAN), r.errors);
    }

    let oscillator = FnDynamics(|_t: f64, h: &[f64]| vec![h[1], -h[0]]);
    let period = 2.0 * std::f64::consts::PI;
    let res = solve(&SolveRequest {
        dynamics: &oscillator,
        initial_state: vec![1.0, 0.0],
        output_times: vec![0.0, period],
        options: SolverOptions::dopri5(1e-8, 1e-8),
    })?;
    let end = &res.states[1];
    let accepted = res.step_log.iter().filter(|s| s.accepted).count();
    println!(
        "dopri5 harmonic oscillator: error after one period {:.2e}, {accepted} accepted of {} steps",
        ((end[0] - 1.0).powi(2) + end[1].powi(2)).sqrt(),
        res.step_log.len()
    );
    Ok(())
}
