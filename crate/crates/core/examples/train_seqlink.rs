//! End-to-end pipeline on a small synthetic dataset: auto-encoder, pyramids, Link-ODE and an ODE-RNN baseline.

use anyhow::Result;
use seqlink::experiment::{run_training, ExperimentConfig, ModelKind};

fn small() -> Result<ExperimentConfig> {
    Ok(ExperimentConfig::desk().with_overrides(&[
        "name=example",
        "dataset.samples=20",
        "dataset.length=20",
        "dataset.sparsity=0.3",
        "hyper.epochs=4",
        "hyper.ae_epochs=3",
        "hyper.attention_epochs=2",
        "hyper.batch_size=8",
        "hyper.ode_units=16",
        "hyper.latent=4",
        "hyper.levels=3",
        "solver.substeps=1",
        "seeds=[0,1]",
    ])?)
}

fn main() -> Result<()> {
    let dir = tempfile::tempdir()?;
    if std::env::var_os("SEQLINK_ARTIFACT_DIR").is_none() {
        std::env::set_var("SEQLINK_ARTIFACT_DIR", dir.path());
    }
    for model in [ModelKind::OdeRnn, ModelKind::Seqlink] {
        let mut cfg = small()?;
        cfg.model = model;
        let report = run_training(&cfg)?;
        print!("{}", report.summary_text());
    }
    Ok(())
}
