use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{artifact_root, DatasetSpec, ExperimentConfig, ModelKind};
use super::report::{MetricsReport, SeedCurve, SeedMetrics};
use super::stats::{evaluate_auc, evaluate_masked_mse};
use crate::autoencoder::{train_autoencoder, AutoencoderConfig, OdeAutoencoder, TrajectoryBank};
use crate::data::{
    apply_sparsity, generate_gaussian_periodic, load_csv, split_shuffled, CsvSchema, DataSource, DatasetManifest,
    NormBounds, TimeSeriesBatch,
};
use crate::diffcore::{AdamConfig, Checkpoint, ParameterStore, Tape, Var};
use crate::error::{Error, Result};
use crate::linkode::{pyramids_for, LinkCheckpoint, LinkOde, ModelBundle};
use crate::pyramid::{build_pyramids, fit_attention, AttentionFitConfig, PyramidSet};
use crate::recurrent::{predict, OdeRnn, OutputHead, Task};
use crate::seeding;
use crate::training::{train, LossCurve, TrainOptions};

/// Train/test splits of one dataset.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub train: TimeSeriesBatch,
    pub test: TimeSeriesBatch,
    pub manifest: DatasetManifest,
}

/// Loads or generates the dataset, applies sparsity, splits and normalizes.
pub fn prepare_data(spec: &DatasetSpec) -> Result<PreparedData> {
    let full = match spec.source {
        DataSource::Synthetic => {
            if spec.dim != 1 {
                return Err(Error::usage("the synthetic generator is univariate; set dataset.dim = 1"));
            }
            generate_gaussian_periodic(spec.samples, spec.length, spec.seed)?
        }
        DataSource::Csv => {
            let path = spec.path.as_ref().ok_or_else(|| Error::usage("csv dataset needs dataset.path"))?;
            load_csv(path, &CsvSchema { label_target: spec.label_target })?
        }
    };
    let sparse = if spec.sparsity > 0.0 {
        apply_sparsity(&full, spec.sparsity, spec.seed, spec.gap_shape)?
    } else {
        full
    };
    let (train, test) = split_shuffled(&sparse, spec.train_fraction, spec.seed)?;
    let (train, test, bounds) = if spec.normalize {
        let b = NormBounds::fit(&train)?;
        (b.apply(&train)?, b.apply(&test)?, Some(b))
    } else {
        (train, test, None)
    };
    let manifest = DatasetManifest {
        source: spec.source,
        length: train.length(),
        dim: train.dim(),
        sparsity: spec.sparsity,
        seed: spec.seed,
        warnings: bounds.as_ref().map(|b| b.warnings.clone()).unwrap_or_default(),
        bounds,
    };
    Ok(PreparedData { train, test, manifest })
}

/// A trained forecasting model of any kind.
#[derive(Clone, Debug)]
pub enum TrainedModel {
    Recurrent { model: OdeRnn, head: OutputHead, store: ParameterStore },
    Link(ModelBundle),
}

impl TrainedModel {
    /// Per-step outputs of every sample, `[n · D_out]` each.
    pub fn predict(&self, batch: &TimeSeriesBatch) -> Result<Vec<Vec<f64>>> {
        match self {
            TrainedModel::Recurrent { model, head, store } => (0..batch.samples())
                .into_par_iter()
                .map(|k| {
                    let states = model.states(store, &batch.sample(k)).map_err(|e| e.in_sample(k))?;
                    Ok(states.iter().flat_map(|h| predict(head, store, h)).collect())
                })
                .collect(),
            TrainedModel::Link(bundle) => crate::linkode::seqlink_predict(bundle, batch),
        }
    }
}

/// Checkpoint of either model family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelCheckpoint {
    Recurrent { model: OdeRnn, head: OutputHead, params: Checkpoint, config_hash: String },
    Link(LinkCheckpoint),
}

impl ModelCheckpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|_| Error::MissingArtifact(format!("missing checkpoint `{}`", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn into_model(self) -> Result<TrainedModel> {
        match self {
            ModelCheckpoint::Recurrent { model, head, params, .. } => {
                Ok(TrainedModel::Recurrent { model, head, store: ParameterStore::from_checkpoint(params)? })
            }
            ModelCheckpoint::Link(c) => Ok(TrainedModel::Link(c.into_bundle()?)),
        }
    }
}

/// Test metrics of a trained model on `batch`.
pub fn evaluate(cfg: &ExperimentConfig, model: &TrainedModel, batch: &TimeSeriesBatch) -> Result<(Option<f64>, Option<f64>)> {
    let preds = model.predict(batch)?;
    let out_dim = batch.out_dim();
    let mut p = Vec::new();
    let mut t = Vec::new();
    let mut m = Vec::new();
    for (k, pk) in preds.iter().enumerate() {
        let s = batch.sample(k);
        p.extend_from_slice(pk);
        t.extend_from_slice(s.target);
        m.extend(cfg.target_mode.restrict(s.target_mask, out_dim));
    }
    match cfg.task {
        Task::Regression => Ok((Some(evaluate_masked_mse(&p, &t, &m)?), None)),
        Task::BinaryClassification => {
            let (scores, labels): (Vec<f64>, Vec<f64>) =
                p.iter().zip(&t).zip(&m).filter(|(_, mk)| **mk != 0.0).map(|((a, b), _)| (*a, *b)).unzip();
            Ok((None, Some(evaluate_auc(&scores, &labels)?)))
        }
    }
}

/// Frozen bank plus the auto-encoder that produced it.
#[derive(Clone, Debug)]
pub struct BankStage {
    pub bank: TrajectoryBank,
    pub autoencoder: Option<(OdeAutoencoder, ParameterStore)>,
    pub curve: LossCurve,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderCheckpoint {
    pub model: OdeAutoencoder,
    pub params: Checkpoint,
}

fn seeded_path(template: &Path, seed: u64) -> PathBuf {
    PathBuf::from(template.to_string_lossy().replace("{seed}", &seed.to_string()))
}

fn stage_err(cfg: &ExperimentConfig, stage: &'static str, seed: u64) -> impl Fn(Error) -> Error {
    let config_hash = cfg.hash();
    move |e| Error::Stage { stage, seed, config_hash: config_hash.clone(), source: Box::new(e) }
}

pub fn autoencoder_config(cfg: &ExperimentConfig, seed: u64) -> AutoencoderConfig {
    AutoencoderConfig {
        latent: cfg.hyper.latent,
        ode_units: cfg.hyper.ode_units,
        epochs: cfg.hyper.ae_epochs,
        batch_size: cfg.hyper.batch_size,
        lr: cfg.hyper.lr,
        removal_fraction: cfg.hyper.removal_fraction,
        solver: cfg.solver,
        seed,
    }
}

/// Trains the auto-encoder on the training split, or loads a stored bank.
pub fn bank_stage(cfg: &ExperimentConfig, seed: u64, data: &PreparedData) -> Result<BankStage> {
    if cfg.stages.skip_autoencoder {
        let path = cfg
            .stages
            .bank_path
            .as_ref()
            .ok_or_else(|| Error::MissingArtifact("missing trajectory bank (stages.bank_path is unset)".into()))?;
        let bank = TrajectoryBank::load(&seeded_path(path, seed))?;
        let autoencoder = match &cfg.stages.pyramid_path {
            Some(_) if cfg.stages.skip_pyramid => None,
            _ => {
                let p = seeded_path(path, seed).with_extension("autoencoder.json");
                let text = std::fs::read_to_string(&p)
                    .map_err(|_| Error::MissingArtifact(format!("missing auto-encoder checkpoint `{}`", p.display())))?;
                let ck: AutoencoderCheckpoint = serde_json::from_str(&text)?;
                Some((ck.model, ParameterStore::from_checkpoint(ck.params)?))
            }
        };
        return Ok(BankStage { bank, autoencoder, curve: LossCurve::default(), warnings: Vec::new() });
    }
    let run = train_autoencoder(&data.train, &autoencoder_config(cfg, seed))?;
    Ok(BankStage {
        bank: run.bank,
        autoencoder: Some((run.model, run.store)),
        curve: run.curve,
        warnings: run.warnings,
    })
}

/// Writes the bank and its auto-encoder next to each other.
pub fn save_bank_stage(stage: &BankStage, path: &Path) -> Result<()> {
    stage.bank.save(path)?;
    if let Some((model, store)) = &stage.autoencoder {
        let ck = AutoencoderCheckpoint { model: model.clone(), params: store.to_checkpoint() };
        std::fs::write(path.with_extension("autoencoder.json"), serde_json::to_string(&ck)?)?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct PyramidStage {
    /// Pyramids of the training and test queries.
    pub pyramids: PyramidSet,
    pub curve: LossCurve,
}

/// Fits the attention embeddings and sorts every train and test query.
pub fn pyramid_stage(cfg: &ExperimentConfig, seed: u64, data: &PreparedData, bank: &BankStage) -> Result<PyramidStage> {
    if cfg.stages.skip_pyramid {
        let path = cfg
            .stages
            .pyramid_path
            .as_ref()
            .ok_or_else(|| Error::MissingArtifact("missing pyramid file (stages.pyramid_path is unset)".into()))?;
        let pyramids = PyramidSet::load(&seeded_path(path, seed))?;
        return Ok(PyramidStage { pyramids, curve: LossCurve::default() });
    }
    let (ae, ae_store) = bank
        .autoencoder
        .as_ref()
        .ok_or_else(|| Error::MissingArtifact("attention fitting needs the auto-encoder checkpoint".into()))?;
    let att_cfg = AttentionFitConfig {
        width: cfg.hyper.embed_width,
        epochs: cfg.hyper.attention_epochs,
        batch_size: cfg.hyper.batch_size,
        lr: cfg.hyper.lr,
        seed,
    };
    let att = fit_attention(&data.train, &bank.bank, ae, ae_store, &att_cfg)?;
    let mut pyramids = build_pyramids(&data.train, &bank.bank, &att.embedding, &att.store, cfg.hyper.levels, cfg.split_rule)?;
    let test = build_pyramids(&data.test, &bank.bank, &att.embedding, &att.store, cfg.hyper.levels, cfg.split_rule)?;
    pyramids.pyramids.extend(test.pyramids);
    Ok(PyramidStage { pyramids, curve: att.curve })
}

/// Pyramids as seen by one model variant.
pub fn variant_pyramids(kind: ModelKind, full: &PyramidSet, bank: &TrajectoryBank) -> Result<PyramidSet> {
    match kind {
        ModelKind::Seqlink => Ok(full.clone()),
        ModelKind::SeqlinkMost => Ok(full.single_level(|l| l - 1)),
        ModelKind::SeqlinkLeast => Ok(full.single_level(|_| 0)),
        ModelKind::SeqlinkUnified => {
            let pyramids = full
                .pyramids
                .iter()
                .map(|p| {
                    let alpha = vec![1.0; bank.len()];
                    let cand: Vec<usize> = (0..bank.len()).filter(|&c| bank.sample_ids[c] != p.query_id).collect();
                    crate::pyramid::pyramidal_sort(&p.query_id, &alpha, &cand, bank, 1, full.rule)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PyramidSet { levels: 1, pyramids, ..full.clone() })
        }
        ModelKind::Rnn | ModelKind::OdeRnn => Err(Error::usage("baseline models take no pyramids")),
    }
}

fn train_options(cfg: &ExperimentConfig, seed: u64) -> TrainOptions {
    TrainOptions {
        epochs: cfg.hyper.epochs,
        batch_size: cfg.hyper.batch_size,
        adam: AdamConfig::with_lr(cfg.hyper.lr),
        seed: seeding::stream(seed, "model.shuffle").random(),
    }
}

/// Trains one forecasting model on the training split.
pub fn train_model(
    cfg: &ExperimentConfig,
    seed: u64,
    kind: ModelKind,
    data: &PreparedData,
    link_inputs: Option<(&TrajectoryBank, &PyramidSet)>,
) -> Result<(TrainedModel, LossCurve)> {
    let train_set = &data.train;
    let (d, out_dim, h) = (train_set.dim(), train_set.out_dim(), cfg.hyper.hidden);
    let mut store = ParameterStore::new();
    let mut rng = seeding::stream(seed, "model.init");
    let mode = cfg.target_mode;
    let target_mask = |k: usize| {
        let s = train_set.sample(k);
        mode.restrict(&s.training_target_mask(), out_dim)
    };
    match kind {
        ModelKind::Rnn | ModelKind::OdeRnn => {
            let units = (kind == ModelKind::OdeRnn).then_some(cfg.hyper.ode_units);
            let model = OdeRnn::new(&mut store, "model", d, h, units, cfg.solver, &mut rng)?;
            let head = OutputHead::new(&mut store, "head", h, out_dim, cfg.task, &mut rng)?;
            let loss = |tape: &mut Tape, store: &ParameterStore, k: usize, _: usize| -> Result<Var> {
                let s = train_set.sample(k);
                let states = model.states_tape(tape, store, &s)?;
                head.loss(tape, store, &states, s.target, &target_mask(k))
            };
            let curve = train(&mut store, train_set.samples(), &train_options(cfg, seed), &loss)?;
            Ok((TrainedModel::Recurrent { model, head, store }, curve))
        }
        _ => {
            let (bank, full) = link_inputs.ok_or_else(|| Error::MissingArtifact("missing trajectory bank".into()))?;
            let pyramids = variant_pyramids(kind, full, bank)?;
            let model = LinkOde::new(&mut store, d, h, bank.latent_dim, pyramids.levels, cfg.hyper.ode_units, cfg.solver, &mut rng)?;
            let head = OutputHead::new(&mut store, "head", h, out_dim, cfg.task, &mut rng)?;
            let pyr = pyramids_for(train_set, &pyramids)?;
            let loss = |tape: &mut Tape, store: &ParameterStore, k: usize, _: usize| -> Result<Var> {
                let s = train_set.sample(k);
                let states = model.states_tape(tape, store, &s, pyr[k])?;
                head.loss(tape, store, &states, s.target, &target_mask(k))
            };
            let curve = train(&mut store, train_set.samples(), &train_options(cfg, seed), &loss)?;
            let bundle = ModelBundle { model, head, store, bank: bank.clone(), pyramids };
            Ok((TrainedModel::Link(bundle), curve))
        }
    }
}

fn is_numeric_failure(e: &Error) -> bool {
    match e {
        Error::NonFinite { .. } | Error::Divergence { .. } => true,
        Error::Sample { source, .. } => is_numeric_failure(source),
        _ => false,
    }
}

/// Shared inputs of the Link-ODE variants for one seed.
pub struct SeedContext {
    pub bank: BankStage,
    pub pyramids: PyramidStage,
}

/// Runs the bank and pyramid stages for `seed`, writing their artifacts to `dir`.
pub fn seed_context(cfg: &ExperimentConfig, seed: u64, data: &PreparedData, dir: &Path) -> Result<SeedContext> {
    let bank = bank_stage(cfg, seed, data).map_err(stage_err(cfg, "train-ae", seed))?;
    save_bank_stage(&bank, &dir.join(format!("bank_seed{seed}.json"))).map_err(stage_err(cfg, "train-ae", seed))?;
    let pyramids = pyramid_stage(cfg, seed, data, &bank).map_err(stage_err(cfg, "build-pyramid", seed))?;
    pyramids
        .pyramids
        .save(&dir.join(format!("pyramids_seed{seed}.json")))
        .map_err(stage_err(cfg, "build-pyramid", seed))?;
    Ok(SeedContext { bank, pyramids })
}

/// Trains and evaluates one model kind for one seed.
fn run_model_seed(
    cfg: &ExperimentConfig,
    seed: u64,
    kind: ModelKind,
    data: &PreparedData,
    ctx: Option<&SeedContext>,
    dir: &Path,
) -> Result<(SeedMetrics, Vec<SeedCurve>, Vec<String>)> {
    let mut curves = Vec::new();
    let mut warnings = Vec::new();
    let mut artifacts = Vec::new();
    if let Some(c) = ctx {
        if !c.bank.curve.epoch_losses.is_empty() {
            curves.push(SeedCurve { seed, stage: "autoencoder".into(), epoch_losses: c.bank.curve.epoch_losses.clone() });
        }
        if !c.pyramids.curve.epoch_losses.is_empty() {
            curves.push(SeedCurve { seed, stage: "attention".into(), epoch_losses: c.pyramids.curve.epoch_losses.clone() });
        }
        warnings.extend(c.bank.warnings.iter().map(|w| format!("seed {seed}: {w}")));
        artifacts.push(dir.join(format!("bank_seed{seed}.json")));
        artifacts.push(dir.join(format!("pyramids_seed{seed}.json")));
    }
    let link_inputs = ctx.map(|c| (&c.bank.bank, &c.pyramids.pyramids));
    let trained = match train_model(cfg, seed, kind, data, link_inputs) {
        Ok(t) => t,
        Err(e) if is_numeric_failure(&e) => {
            warnings.push(format!("seed {seed}: training aborted: {e}"));
            let metrics = SeedMetrics { seed, test_mse: None, test_auc: None, final_train_loss: None, failure: Some(e.to_string()), artifacts };
            return Ok((metrics, curves, warnings));
        }
        Err(e) => return Err(stage_err(cfg, "train", seed)(e)),
    };
    let (model, curve) = trained;
    curves.push(SeedCurve { seed, stage: "train".into(), epoch_losses: curve.epoch_losses.clone() });
    let ckpt_path = dir.join(format!("{}_checkpoint_seed{seed}.json", kind.name()));
    let checkpoint = match &model {
        TrainedModel::Recurrent { model, head, store } => ModelCheckpoint::Recurrent {
            model: model.clone(),
            head: head.clone(),
            params: store.to_checkpoint(),
            config_hash: cfg.hash(),
        },
        TrainedModel::Link(b) => {
            let pyr_path = dir.join(format!("{}_pyramids_seed{seed}.json", kind.name()));
            b.pyramids.save(&pyr_path).map_err(stage_err(cfg, "train", seed))?;
            ModelCheckpoint::Link(LinkCheckpoint {
                format_version: LinkCheckpoint::FORMAT_VERSION,
                model: b.model.clone(),
                head: b.head.clone(),
                params: b.store.to_checkpoint(),
                bank_path: dir.join(format!("bank_seed{seed}.json")),
                pyramid_path: pyr_path,
                config_hash: cfg.hash(),
            })
        }
    };
    checkpoint.save(&ckpt_path).map_err(stage_err(cfg, "train", seed))?;
    artifacts.push(ckpt_path);
    let (test_mse, test_auc) = match evaluate(cfg, &model, &data.test) {
        Ok(m) => m,
        Err(e) if is_numeric_failure(&e) => {
            warnings.push(format!("seed {seed}: evaluation failed: {e}"));
            let metrics = SeedMetrics { seed, test_mse: None, test_auc: None, final_train_loss: curve.last(), failure: Some(e.to_string()), artifacts };
            return Ok((metrics, curves, warnings));
        }
        Err(e) => return Err(stage_err(cfg, "eval", seed)(e)),
    };
    let metrics = SeedMetrics { seed, test_mse, test_auc, final_train_loss: curve.last(), failure: None, artifacts };
    Ok((metrics, curves, warnings))
}

/// Directory of a run under the artifact root.
pub fn run_dir(cfg: &ExperimentConfig) -> PathBuf {
    artifact_root().join(cfg.run_id())
}

fn collect_report(
    cfg: &ExperimentConfig,
    kind: ModelKind,
    results: Vec<(SeedMetrics, Vec<SeedCurve>, Vec<String>)>,
    started: Instant,
) -> MetricsReport {
    let mut run_cfg = cfg.clone();
    run_cfg.model = kind;
    let mut per_seed = Vec::new();
    let mut curves = Vec::new();
    let mut warnings = Vec::new();
    for (m, c, w) in results {
        per_seed.push(m);
        curves.extend(c);
        warnings.extend(w);
    }
    MetricsReport::aggregate(&run_cfg, per_seed, curves, warnings, started.elapsed().as_secs_f64())
}

/// Full pipeline for every configured seed; writes artifacts and the report files.
pub fn run_training(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let started = Instant::now();
    let data = prepare_data(&cfg.dataset)?;
    let dir = run_dir(cfg);
    std::fs::create_dir_all(&dir)?;
    data.manifest.save(&dir.join("dataset.json"))?;
    let results = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let ctx = if cfg.model.uses_bank() { Some(seed_context(cfg, seed, &data, &dir)?) } else { None };
            run_model_seed(cfg, seed, cfg.model, &data, ctx.as_ref(), &dir)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = collect_report(cfg, cfg.model, results, started);
    report.write(&dir)?;
    Ok(report)
}

/// Full pyramid, unified, most-related and least-related variants sharing each seed's bank and pyramids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub config_hash: String,
    pub variants: Vec<MetricsReport>,
}

pub fn run_ablation(cfg: &ExperimentConfig) -> Result<AblationReport> {
    let mut cfg = cfg.clone();
    cfg.model = ModelKind::Seqlink;
    cfg.validate()?;
    let started = Instant::now();
    let data = prepare_data(&cfg.dataset)?;
    let dir = artifact_root().join(format!("{}-ablation-{}", cfg.name, &cfg.hash()[..12]));
    std::fs::create_dir_all(&dir)?;
    let per_seed = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let ctx = seed_context(&cfg, seed, &data, &dir)?;
            ModelKind::ABLATIONS
                .par_iter()
                .map(|&kind| run_model_seed(&cfg, seed, kind, &data, Some(&ctx), &dir))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let variants = ModelKind::ABLATIONS
        .iter()
        .enumerate()
        .map(|(v, &kind)| {
            let results = per_seed.iter().map(|seed_results| seed_results[v].clone()).collect();
            collect_report(&cfg, kind, results, started)
        })
        .collect();
    let report = AblationReport { config_hash: cfg.hash(), variants };
    std::fs::write(dir.join("ablation.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub length: usize,
    pub fraction: f64,
    pub report: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub model: ModelKind,
    pub lengths: Vec<usize>,
    pub fractions: Vec<f64>,
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn cell(&self, length: usize, fraction: f64) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.length == length && c.fraction == fraction)
    }
}

/// One run per (length, fraction) cell; every cell of a length shares the base dataset and seeds.
pub fn run_sparsity_sweep(cfg: &ExperimentConfig, lengths: &[usize], fractions: &[f64]) -> Result<SweepReport> {
    if lengths.is_empty() || fractions.is_empty() {
        return Err(Error::usage("sweep needs at least one length and one fraction"));
    }
    let grid: Vec<(usize, f64)> = lengths.iter().flat_map(|&l| fractions.iter().map(move |&f| (l, f))).collect();
    let cells = grid
        .par_iter()
        .map(|&(length, fraction)| {
            let mut c = cfg.clone();
            c.dataset.length = length;
            c.dataset.sparsity = fraction;
            run_training(&c).map(|report| SweepCell { length, fraction, report })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = SweepReport { model: cfg.model, lengths: lengths.to_vec(), fractions: fractions.to_vec(), cells };
    let dir = artifact_root().join(format!("{}-sweep-{}", cfg.name, &cfg.hash()[..12]));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}
