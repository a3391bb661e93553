//! ODE-RNN test error over a grid of sequence lengths and sparsity levels.

use anyhow::Result;
use seqlink::experiment::{run_sparsity_sweep, ExperimentConfig};

fn main() -> Result<()> {
    let dir = tempfile::tempdir()?;
    if std::env::var_os("SEQLINK_ARTIFACT_DIR").is_none() {
        std::env::set_var("SEQLINK_ARTIFACT_DIR", dir.path());
    }
    let cfg = ExperimentConfig::desk().with_overrides(&[
        "name=example",
        "model=ode_rnn",
        "dataset.samples=16",
        "hyper.epochs=3",
        "hyper.batch_size=8",
        "hyper.ode_units=12",
        "solver.substeps=1",
        "seeds=[0,1]",
    ])?;
    let report = run_sparsity_sweep(&cfg, &[10, 20], &[0.1, 0.4])?;
    for cell in &report.cells {
        println!("n={:>3} sparsity={:.1}: mse {:?}", cell.length, cell.fraction, cell.report.mse.mean);
    }
    Ok(())
}
