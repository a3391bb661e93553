use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use seqlink::experiment::{
    artifact_root, bank_stage, evaluate, prepare_data, pyramid_stage, rank_sum_test, run_ablation, run_sparsity_sweep,
    run_training, save_bank_stage, AblationReport, BankStage, ExperimentConfig, MetricsReport, ModelCheckpoint,
    SweepReport,
};

#[derive(Parser)]
#[command(name = "seqlink", about = "Sparse time-series forecasting with linked hidden trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config file; defaults to the desk profile.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in profile used when no config file is given: desk or paper.
    #[arg(long, default_value = "desk")]
    profile: String,
    /// Dotted `key=value` override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let base = match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
            None => ExperimentConfig::profile(&self.profile)?,
        };
        let cfg = base.with_overrides(&self.set)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate or load the dataset and write the prepared splits.
    GenData(ConfigArgs),
    /// Train the auto-encoder and write one trajectory bank per seed.
    TrainAe(ConfigArgs),
    /// Fit attention and write one pyramid file per seed.
    BuildPyramid(ConfigArgs),
    /// Run the full training pipeline.
    Train(ConfigArgs),
    /// Evaluate a stored checkpoint on the test split.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Run the four pyramid ablation variants.
    Ablate(ConfigArgs),
    /// Run a sequence-length by sparsity grid.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "50,100,200")]
        lengths: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4")]
        fractions: Vec<f64>,
    },
    /// Print a metrics, ablation or sweep JSON file.
    Report { path: PathBuf },
    /// Two-sided rank-sum test of two error lists.
    Ranktest {
        #[arg(long, value_delimiter = ',', required = true)]
        a: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        b: Vec<f64>,
    },
}

fn stage_dir(cfg: &ExperimentConfig) -> PathBuf {
    artifact_root().join(format!("{}-stages-{}", cfg.name, &cfg.hash()[..12]))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenData(args) => {
            let cfg = args.load()?;
            let data = prepare_data(&cfg.dataset)?;
            let dir = artifact_root().join(format!("{}-data-{}", cfg.name, &cfg.hash()[..12]));
            std::fs::create_dir_all(&dir)?;
            data.train.save(&dir.join("train.json"))?;
            data.test.save(&dir.join("test.json"))?;
            data.manifest.save(&dir.join("manifest.json"))?;
            println!("wrote {} train and {} test samples to {}", data.train.samples(), data.test.samples(), dir.display());
        }
        Command::TrainAe(args) => {
            let cfg = args.load()?;
            let data = prepare_data(&cfg.dataset)?;
            let dir = stage_dir(&cfg);
            std::fs::create_dir_all(&dir)?;
            for &seed in &cfg.seeds {
                let stage = bank_stage(&cfg, seed, &data)?;
                let path = dir.join(format!("bank_seed{seed}.json"));
                save_bank_stage(&stage, &path)?;
                println!("seed {seed}: final loss {:?}, bank {}", stage.curve.last(), path.display());
            }
        }
        Command::BuildPyramid(args) => {
            let cfg = args.load()?;
            let data = prepare_data(&cfg.dataset)?;
            let dir = stage_dir(&cfg);
            std::fs::create_dir_all(&dir)?;
            for &seed in &cfg.seeds {
                let mut c = cfg.clone();
                if c.stages.bank_path.is_none() {
                    c.stages.bank_path = Some(dir.join("bank_seed{seed}.json"));
                }
                c.stages.skip_autoencoder = true;
                let bank: BankStage = bank_stage(&c, seed, &data)?;
                let stage = pyramid_stage(&c, seed, &data, &bank)?;
                let path = dir.join(format!("pyramids_seed{seed}.json"));
                stage.pyramids.save(&path)?;
                println!("seed {seed}: {} pyramids, {}", stage.pyramids.len(), path.display());
            }
        }
        Command::Train(args) => {
            let report = run_training(&args.load()?)?;
            print!("{}", report.summary_text());
        }
        Command::Eval { cfg, checkpoint } => {
            let cfg = cfg.load()?;
            let data = prepare_data(&cfg.dataset)?;
            let model = ModelCheckpoint::load(&checkpoint)?.into_model()?;
            let (mse, auc) = evaluate(&cfg, &model, &data.test)?;
            println!("{}", serde_json::json!({ "test_mse": mse, "test_auc": auc }));
        }
        Command::Ablate(args) => {
            let report = run_ablation(&args.load()?)?;
            for v in &report.variants {
                print!("{}", v.summary_text());
            }
        }
        Command::Sweep { cfg, lengths, fractions } => {
            let report = run_sparsity_sweep(&cfg.load()?, &lengths, &fractions)?;
            print_sweep(&report);
        }
        Command::Report { path } => {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            if let Ok(r) = serde_json::from_str::<MetricsReport>(&text) {
                print!("{}", r.summary_text());
            } else if let Ok(r) = serde_json::from_str::<AblationReport>(&text) {
                for v in &r.variants {
                    print!("{}", v.summary_text());
                }
            } else if let Ok(r) = serde_json::from_str::<SweepReport>(&text) {
                print_sweep(&r);
            } else {
                bail!("{} is not a metrics, ablation or sweep report", path.display());
            }
        }
        Command::Ranktest { a, b } => {
            println!("p = {}", rank_sum_test(&a, &b)?);
        }
    }
    Ok(())
}

fn print_sweep(r: &SweepReport) {
    println!("model {}: mean test MSE", r.model.name());
    print!("{:>8}", "length");
    for f in &r.fractions {
        print!("{:>12}", format!("{:.0}%", f * 100.0));
    }
    println!();
    for &l in &r.lengths {
        print!("{l:>8}");
        for &f in &r.fractions {
            let v = r.cell(l, f).and_then(|c| c.report.mse.mean);
            print!("{:>12}", v.map_or("n/a".into(), |v| format!("{v:.5}")));
        }
        println!();
    }
}
