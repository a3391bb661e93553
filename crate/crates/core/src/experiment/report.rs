use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ModelKind};
use super::stats::mean_std;
use crate::error::Result;

/// Test metrics of one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub test_mse: Option<f64>,
    pub test_auc: Option<f64>,
    pub final_train_loss: Option<f64>,
    /// Set when the seed aborted on a numeric failure.
    pub failure: Option<String>,
    pub artifacts: Vec<PathBuf>,
}

/// Per-epoch losses of one training stage of one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedCurve {
    pub seed: u64,
    pub stage: String,
    pub epoch_losses: Vec<f64>,
}

/// Mean and sample standard deviation of a metric over the successful seeds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: Option<f64>,
    /// Absent below two values.
    pub std: Option<f64>,
    pub count: usize,
}

impl Summary {
    fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Summary { mean, std, count: values.len() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub run_id: String,
    pub model: ModelKind,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub per_seed: Vec<SeedMetrics>,
    pub mse: Summary,
    pub auc: Summary,
    /// True when at least one seed failed and was left out of the aggregate.
    pub partial: bool,
    pub warnings: Vec<String>,
    pub loss_curves: Vec<SeedCurve>,
    /// Excluded from equality.
    pub wall_clock_secs: f64,
}

/// One long-format record of the plot file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRecord {
    pub run_id: String,
    pub seed: Option<u64>,
    pub stage: String,
    pub epoch: Option<usize>,
    pub metric: String,
    pub value: f64,
}

impl MetricsReport {
    pub fn aggregate(
        cfg: &ExperimentConfig,
        mut per_seed: Vec<SeedMetrics>,
        mut loss_curves: Vec<SeedCurve>,
        mut warnings: Vec<String>,
        wall_clock_secs: f64,
    ) -> Self {
        per_seed.sort_by_key(|m| m.seed);
        loss_curves.sort_by(|a, b| (a.seed, &a.stage).cmp(&(b.seed, &b.stage)));
        for c in &loss_curves {
            let first = c.epoch_losses.first().copied();
            if c.epoch_losses.len() > 1 && first.is_some_and(|f| c.epoch_losses[1..].iter().all(|l| *l >= f)) {
                warnings.push(format!("seed {}: {} loss never decreased", c.seed, c.stage));
            }
        }
        warnings.sort();
        let mse: Vec<f64> = per_seed.iter().filter_map(|m| m.test_mse).collect();
        let auc: Vec<f64> = per_seed.iter().filter_map(|m| m.test_auc).collect();
        MetricsReport {
            run_id: cfg.run_id(),
            model: cfg.model,
            config_hash: cfg.hash(),
            config: cfg.clone(),
            partial: per_seed.iter().any(|m| m.failure.is_some()),
            mse: Summary::of(&mse),
            auc: Summary::of(&auc),
            per_seed,
            warnings,
            loss_curves,
            wall_clock_secs,
        }
    }

    /// Equality ignoring wall-clock time.
    pub fn same_results(&self, other: &Self) -> bool {
        let mut a = self.clone();
        a.wall_clock_secs = other.wall_clock_secs;
        a == *other
    }

    /// JSON with the wall-clock field removed.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(o) = v.as_object_mut() {
            o.remove("wall_clock_secs");
        }
        Ok(serde_json::to_string_pretty(&v)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn plot_records(&self) -> Vec<PlotRecord> {
        let mut out = Vec::new();
        for c in &self.loss_curves {
            for (e, l) in c.epoch_losses.iter().enumerate() {
                out.push(PlotRecord {
                    run_id: self.run_id.clone(),
                    seed: Some(c.seed),
                    stage: c.stage.clone(),
                    epoch: Some(e),
                    metric: "loss".into(),
                    value: *l,
                });
            }
        }
        for m in &self.per_seed {
            for (name, v) in [("test_mse", m.test_mse), ("test_auc", m.test_auc)] {
                if let Some(value) = v {
                    out.push(PlotRecord {
                        run_id: self.run_id.clone(),
                        seed: Some(m.seed),
                        stage: "eval".into(),
                        epoch: None,
                        metric: name.into(),
                        value,
                    });
                }
            }
        }
        out
    }

    /// Writes `metrics.json`, `loss_curve.csv` and `plot.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(self)?)?;
        let mut w = csv::Writer::from_path(dir.join("loss_curve.csv"))?;
        w.write_record(["run_id", "seed", "stage", "epoch", "loss"])?;
        for c in &self.loss_curves {
            for (e, l) in c.epoch_losses.iter().enumerate() {
                w.write_record([self.run_id.clone(), c.seed.to_string(), c.stage.clone(), e.to_string(), l.to_string()])?;
            }
        }
        w.flush()?;
        std::fs::write(dir.join("plot.json"), serde_json::to_string_pretty(&self.plot_records())?)?;
        Ok(())
    }

    /// Human-readable summary.
    pub fn summary_text(&self) -> String {
        let fmt = |s: &Summary| match (s.mean, s.std) {
            (Some(m), Some(sd)) => format!("{m:.6} ± {sd:.6} (n={})", s.count),
            (Some(m), None) => format!("{m:.6} (n={}, std absent)", s.count),
            _ => "n/a".into(),
        };
        let mut s = format!("{} [{}]\n  mse: {}\n  auc: {}\n", self.run_id, self.model.name(), fmt(&self.mse), fmt(&self.auc));
        if self.partial {
            s.push_str("  partial: some seeds failed\n");
        }
        for w in &self.warnings {
            s.push_str(&format!("  warning: {w}\n"));
        }
        s
    }
}
