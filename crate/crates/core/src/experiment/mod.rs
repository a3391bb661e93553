//! End-to-end pipelines, metrics and reports.

mod config;
mod pipeline;
mod report;
mod stats;

pub use config::{artifact_root, DatasetSpec, ExperimentConfig, Hyper, ModelKind, Stages};
pub use pipeline::{
    autoencoder_config, bank_stage, evaluate, prepare_data, pyramid_stage, run_ablation, run_dir,
    run_sparsity_sweep, run_training, save_bank_stage, seed_context, train_model, variant_pyramids, AblationReport,
    AutoencoderCheckpoint, BankStage, ModelCheckpoint, PreparedData, PyramidStage, SeedContext, SweepCell,
    SweepReport, TrainedModel,
};
pub use report::{MetricsReport, PlotRecord, SeedCurve, SeedMetrics, Summary};
pub use stats::{evaluate_auc, evaluate_masked_mse, evaluate_mse, mean_std, rank_sum_test};
