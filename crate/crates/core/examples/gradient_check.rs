//! Reverse-mode gradients of ODE-RNN and Link-ODE losses against central differences.

use anyhow::Result;
use seqlink::autoencoder::TrajectoryBank;
use seqlink::data::{apply_sparsity, generate_gaussian_periodic, GapShape};
use seqlink::diffcore::{check_gradients, Array};
use seqlink::linkode::LinkOde;
use seqlink::odesolve::{Method, SolverOptions};
use seqlink::pyramid::{pyramidal_sort, SplitRule};
use seqlink::recurrent::{OdeRnn, OutputHead, Task};
use seqlink::seeding;
use rand::Rng;

fn main() -> Result<()> {
    let batch = apply_sparsity(&generate_gaussian_periodic(5, 8, 3)?, 0.3, 3, GapShape::Iid)?;
    let series = batch.sample(0);
    let mask = series.training_target_mask();
    let solver = SolverOptions::fixed(Method::Rk4, 2);
    let mut rng = seeding::stream(1, "example.init");

    let mut store = seqlink::diffcore::ParameterStore::new();
    let model = OdeRnn::new(&mut store, "model", 1, 6, Some(8), solver, &mut rng)?;
    let head = OutputHead::new(&mut store, "head", 6, 1, Task::Regression, &mut rng)?;
    let report = check_gradients(&store, 1e-6, 1e-4, &|tape, store| {
        let states = model.states_tape(tape, store, &series)?;
        head.loss(tape, store, &states, series.target, &mask)
    })?;
    println!("ODE-RNN: {} scalars, max relative error {:.2e} ({})", report.checked_scalars, report.max_relative_error, report.worst_parameter);

    let latent = 3;
    let traj: Vec<f64> = (0..batch.samples() * batch.length() * latent).map(|_| rng.random_range(-1.0..1.0)).collect();
    let bank = TrajectoryBank::new(batch.ids().to_vec(), batch.times().to_vec(), Array::new(vec![batch.samples(), batch.length(), latent], traj)?)?;
    let alpha: Vec<f64> = (0..bank.len()).map(|_| rng.random_range(0.0..1.0)).collect();
    let cand: Vec<usize> = (1..bank.len()).collect();
    let pyramid = pyramidal_sort(&batch.ids()[0], &alpha, &cand, &bank, 2, SplitRule::RemainingMean)?;
    let mut store = seqlink::diffcore::ParameterStore::new();
    let link = LinkOde::new(&mut store, 1, 6, latent, 2, 8, solver, &mut rng)?;
    let head = OutputHead::new(&mut store, "head", 6, 1, Task::Regression, &mut rng)?;
    let report = check_gradients(&store, 1e-6, 1e-4, &|tape, store| {
        let states = link.states_tape(tape, store, &series, &pyramid)?;
        head.loss(tape, store, &states, series.target, &mask)
    })?;
    println!("Link-ODE: {} scalars, max relative error {:.2e} ({})", report.checked_scalars, report.max_relative_error, report.worst_parameter);
    Ok(())
}
