//! Trains the ODE auto-encoder on cut-out corrupted sequences and saves the trajectory bank.

use anyhow::Result;
use seqlink::autoencoder::{train_autoencoder, AutoencoderConfig, TrajectoryBank};
use seqlink::data::{apply_sparsity, generate_gaussian_periodic, GapShape};
use seqlink::odesolve::{Method, SolverOptions};

fn main() -> Result<()> {
    let batch = apply_sparsity(&generate_gaussian_periodic(16, 30, 1)?, 0.3, 1, GapShape::Contiguous)?;
    let cfg = AutoencoderConfig {
        latent: 4,
        ode_units: 16,
        epochs: 8,
        batch_size: 8,
        solver: SolverOptions::fixed(Method::Rk4, 1),
        ..AutoencoderConfig::default()
    };
    let run = train_autoencoder(&batch, &cfg)?;
    println!("reconstruction loss by epoch: {:?}", run.curve.epoch_losses);
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("bank.json");
    run.bank.save(&path)?;
    let loaded = TrajectoryBank::load(&path)?;
    println!("bank: {} trajectories of {} steps × {} latent, round trip exact: {}", loaded.len(), loaded.length(), loaded.latent_dim, loaded == run.bank);
    Ok(())
}
