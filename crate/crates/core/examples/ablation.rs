//! The four pyramid variants trained on one shared bank and pyramid set.

use anyhow::Result;
use seqlink::experiment::{run_ablation, ExperimentConfig};

fn main() -> Result<()> {
    let dir = tempfile::tempdir()?;
    if std::env::var_os("SEQLINK_ARTIFACT_DIR").is_none() {
        std::env::set_var("SEQLINK_ARTIFACT_DIR", dir.path());
    }
    let cfg = ExperimentConfig::desk().with_overrides(&[
        "name=example",
        "dataset.samples=16",
        "dataset.length=16",
        "dataset.sparsity=0.4",
        "hyper.epochs=3",
        "hyper.ae_epochs=2",
        "hyper.attention_epochs=2",
        "hyper.batch_size=8",
        "hyper.ode_units=12",
        "hyper.latent=3",
        "hyper.levels=3",
        "solver.substeps=1",
        "seeds=[0]",
    ])?;
    let report = run_ablation(&cfg)?;
    for v in &report.variants {
        print!("{}", v.summary_text());
    }
    Ok(())
}
