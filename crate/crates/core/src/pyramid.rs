//! Cross-sample attention over the trajectory bank and pyramidal sorting.
//!
//! A query sample scores every bank candidate by
//! `S = θ · (ē_x ⊕ ē_u)`, where `ē_x` is the mean value embedding over the
//! query's observed steps and `ē_u` is the mean candidate-trajectory
//! embedding over those same steps. A softmax over candidates gives the
//! importance row `α`, which mean-splitting sorts into `L` levels of
//! increasing relevance.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{OdeAutoencoder, TrajectoryBank};
use crate::data::{SeriesView, TimeSeriesBatch};
use crate::diffcore::{Activation, AdamConfig, Array, Dense, ParamId, ParameterStore, Tape, Var};
use crate::error::{Error, Result};
use crate::seeding;
use crate::training::{train, LossCurve, TrainOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingParams {
    pub phi_x: Dense,
    pub phi_u: Dense,
    /// Score vector `[2E]`: first half applies to `ē_x`, second to `ē_u`.
    pub theta: ParamId,
    pub width: usize,
}

impl EmbeddingParams {
    /// Registers `attn.phi_x.*`, `attn.phi_u.*` and `attn.theta`.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        input_dim: usize,
        latent: usize,
        width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let phi_x = Dense::new(store, "attn.phi_x", input_dim, width, Activation::Tanh, rng)?;
        let phi_u = Dense::new(store, "attn.phi_u", latent, width, Activation::Tanh, rng)?;
        let theta = store.add_uniform("attn.theta", &[2 * width], width, rng)?;
        Ok(Self { phi_x, phi_u, theta, width })
    }
}

/// Pooling weights over the query's observed steps (uniform when none is observed).
fn pooling_weights(query: &SeriesView<'_>) -> Vec<f64> {
    let obs: Vec<f64> = (0..query.len()).map(|i| if query.observed(i) { 1.0 } else { 0.0 }).collect();
    let total: f64 = obs.iter().sum();
    if total == 0.0 {
        vec![1.0 / query.len() as f64; query.len()]
    } else {
        obs.into_iter().map(|o| o / total).collect()
    }
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Attention weights of queries over bank candidates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceMatrix {
    /// `[K_query, K_bank]`; an excluded candidate has weight 0.
    pub alpha: Array,
    /// Raw scores before the softmax, same layout.
    pub scores: Array,
    pub query_ids: Vec<String>,
    pub bank_ids: Vec<String>,
    /// Bank index excluded from each query's candidates (its own entry).
    pub excluded: Vec<Option<usize>>,
}

impl ImportanceMatrix {
    /// Softmax of each score row over its non-excluded entries.
    pub fn from_scores(
        scores: Array,
        query_ids: Vec<String>,
        bank_ids: Vec<String>,
        excluded: Vec<Option<usize>>,
    ) -> Result<Self> {
        let (kq, kb) = scores.dims2().ok_or_else(|| Error::shape("attention_scores", "scores must be 2-D"))?;
        if kq != query_ids.len() || kb != bank_ids.len() || excluded.len() != kq {
            return Err(Error::shape("attention_scores", "ids do not match the score matrix"));
        }
        let mut alpha = vec![0.0; kq * kb];
        for q in 0..kq {
            let cand = candidates(kb, excluded[q]);
            if cand.is_empty() {
                return Err(Error::usage("bank has no candidates besides the query itself"));
            }
            let row = scores.row(q);
            let a = softmax(&cand.iter().map(|&c| row[c]).collect::<Vec<_>>());
            for (&c, v) in cand.iter().zip(a) {
                alpha[q * kb + c] = v;
            }
        }
        Ok(Self { alpha: Array::matrix(kq, kb, alpha)?, scores, query_ids, bank_ids, excluded })
    }

    pub fn row(&self, q: usize) -> &[f64] {
        self.alpha.row(q)
    }

    pub fn candidates(&self, q: usize) -> Vec<usize> {
        candidates(self.bank_ids.len(), self.excluded[q])
    }
}

fn candidates(k_bank: usize, excluded: Option<usize>) -> Vec<usize> {
    (0..k_bank).filter(|c| Some(*c) != excluded).collect()
}

/// `θ_u · φ_u(u_i^c)` for every candidate `c` and step `i`, `[K_bank · n]`.
fn candidate_step_scores(emb: &EmbeddingParams, store: &ParameterStore, bank: &TrajectoryBank) -> Vec<f64> {
    let theta = store.value(emb.theta).data();
    let theta_u = &theta[emb.width..];
    (0..bank.len())
        .into_par_iter()
        .flat_map_iter(|c| {
            (0..bank.length()).map(move |i| {
                let e = emb.phi_u.apply(store, bank.at(c, i));
                e.iter().zip(theta_u).map(|(a, b)| a * b).sum::<f64>()
            })
        })
        .collect()
}

fn query_term(emb: &EmbeddingParams, store: &ParameterStore, query: &SeriesView<'_>, weights: &[f64]) -> f64 {
    let theta = store.value(emb.theta).data();
    let mut pooled = vec![0.0; emb.width];
    for (i, w) in weights.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        let e = emb.phi_x.apply(store, &query.masked_values_at(i));
        for (p, v) in pooled.iter_mut().zip(e) {
            *p += w * v;
        }
    }
    pooled.iter().zip(&theta[..emb.width]).map(|(a, b)| a * b).sum()
}

fn check_grid(batch: &TimeSeriesBatch, bank: &TrajectoryBank) -> Result<()> {
    if bank.is_empty() {
        return Err(Error::usage("trajectory bank is empty"));
    }
    if batch.times() != bank.time_grid.as_slice() {
        return Err(Error::usage("query batch and trajectory bank use different time grids"));
    }
    Ok(())
}

/// Scores every query of `batch` against `bank`, excluding a query's own bank entry (matched by id).
pub fn attention_scores(
    emb: &EmbeddingParams,
    store: &ParameterStore,
    batch: &TimeSeriesBatch,
    bank: &TrajectoryBank,
) -> Result<ImportanceMatrix> {
    check_grid(batch, bank)?;
    let (kb, n) = (bank.len(), bank.length());
    let step = candidate_step_scores(emb, store, bank);
    let rows: Vec<Vec<f64>> = (0..batch.samples())
        .into_par_iter()
        .map(|q| {
            let query = batch.sample(q);
            let w = pooling_weights(&query);
            let base = query_term(emb, store, &query, &w);
            (0..kb)
                .map(|c| base + step[c * n..(c + 1) * n].iter().zip(&w).map(|(s, wi)| s * wi).sum::<f64>())
                .collect()
        })
        .collect();
    let excluded = batch.ids().iter().map(|id| bank.sample_ids.iter().position(|b| b == id)).collect();
    ImportanceMatrix::from_scores(
        Array::matrix(batch.samples(), kb, rows.concat())?,
        batch.ids().to_vec(),
        bank.sample_ids.clone(),
        excluded,
    )
}

/// Bank trajectories rearranged for mixing: `[n · H_u, K_bank]`.
fn bank_columns(bank: &TrajectoryBank) -> Vec<f64> {
    let (kb, w) = (bank.len(), bank.length() * bank.latent_dim);
    let mut out = vec![0.0; w * kb];
    for c in 0..kb {
        for (r, v) in bank.trajectory(c).iter().enumerate() {
            out[r * kb + c] = *v;
        }
    }
    out
}

/// Attention row of one query on the tape, over `cand` (bank indices).
fn alpha_tape(
    tape: &mut Tape,
    emb: &EmbeddingParams,
    store: &ParameterStore,
    bank_rows: Var,
    query: &SeriesView<'_>,
    cand: &[usize],
    kb: usize,
) -> Result<Var> {
    let n = query.len();
    let w = pooling_weights(query);
    let theta = tape.param(store, emb.theta);
    let theta_x = tape.slice(theta, 0, emb.width)?;
    let theta_u = tape.slice(theta, emb.width, emb.width)?;

    let xs: Vec<f64> = (0..n).flat_map(|i| query.masked_values_at(i)).collect();
    let xs = tape.input(Array::matrix(n, query.dim, xs)?);
    let ex = emb.phi_x.forward_rows(tape, store, xs)?;
    let ex = tape.row_mean(ex, &w)?;
    let sx = tape.dot(theta_x, ex)?;

    let eu = emb.phi_u.forward_rows(tape, store, bank_rows)?;
    let su = tape.matvec(eu, theta_u)?;
    let su = tape.reshape(su, &[kb, n])?;
    let wv = tape.vector(w);
    let su = tape.matvec(su, wv)?;
    let su = tape.gather(su, cand)?;
    let s = tape.add_scalar(su, sx)?;
    tape.softmax(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionFitConfig {
    pub width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

pub struct AttentionRun {
    pub embedding: EmbeddingParams,
    pub store: ParameterStore,
    pub curve: LossCurve,
}

/// Trains the embeddings so that the `α`-weighted mixture of other samples'
/// trajectories, passed through the frozen decoder, reconstructs each query.
pub fn fit_attention(
    batch: &TimeSeriesBatch,
    bank: &TrajectoryBank,
    autoencoder: &OdeAutoencoder,
    ae_store: &ParameterStore,
    cfg: &AttentionFitConfig,
) -> Result<AttentionRun> {
    check_grid(batch, bank)?;
    let mut store = ParameterStore::new();
    let mut rng = seeding::stream(cfg.seed, "attention.init");
    let emb = EmbeddingParams::new(&mut store, batch.dim(), bank.latent_dim, cfg.width, &mut rng)?;
    let (kb, n, h, d) = (bank.len(), bank.length(), bank.latent_dim, batch.dim());
    let rows = Array::matrix(kb * n, h, bank.trajectories.data().to_vec())?;
    let columns = bank_columns(bank);
    let columns = columns.as_slice();
    let dec = &autoencoder.decoder;
    let w_dec = ae_store.value(dec.weight);
    let w_dec_t: Vec<f64> = (0..h).flat_map(|c| (0..d).map(move |r| w_dec.data()[r * h + c])).collect();
    let w_dec_t = Array::matrix(h, d, w_dec_t)?;
    let b_dec = ae_store.value(dec.bias).clone();
    let excluded: Vec<Option<usize>> = batch.ids().iter().map(|id| bank.sample_ids.iter().position(|b| b == id)).collect();

    let loss = |tape: &mut Tape, store: &ParameterStore, q: usize, _epoch: usize| -> Result<Var> {
        let query = batch.sample(q);
        let cand = candidates(kb, excluded[q]);
        let bank_rows = tape.input(rows.clone());
        let alpha = alpha_tape(tape, &emb, store, bank_rows, &query, &cand, kb)?;
        let cols: Vec<f64> = (0..n * h).flat_map(|r| cand.iter().map(move |&c| columns[r * kb + c])).collect();
        let cols = tape.input(Array::matrix(n * h, cand.len(), cols)?);
        let mix = tape.matvec(cols, alpha)?;
        let mix = tape.reshape(mix, &[n, h])?;
        let wt = tape.input(w_dec_t.clone());
        let y = tape.matmul(mix, wt)?;
        let b = tape.input(b_dec.clone());
        let y = tape.add_bias(y, b)?;
        tape.masked_mse(y, query.x, query.m)
    };
    let opts = TrainOptions {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        adam: AdamConfig::with_lr(cfg.lr),
        seed: seeding::stream(cfg.seed, "attention.shuffle").random(),
    };
    let curve = train(&mut store, batch.samples(), &opts, &loss)?;
    Ok(AttentionRun { embedding: emb, store, curve })
}

/// How each level's membership is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// Mean over the remaining candidates; the apex takes whatever remains.
    #[default]
    RemainingMean,
    /// Mean divided by the full candidate count at every level, no absorption.
    AsPrinted,
}

/// Level membership (candidate positions within `alpha`) for `levels` levels, bottom first.
pub fn sort_levels(alpha: &[f64], levels: usize, rule: SplitRule) -> Result<Vec<Vec<usize>>> {
    if levels == 0 {
        return Err(Error::usage("pyramid needs at least one level"));
    }
    if levels > alpha.len() {
        return Err(Error::usage(format!("{levels} levels exceed {} candidates", alpha.len())));
    }
    let k = alpha.len() as f64;
    let mut remaining: Vec<usize> = (0..alpha.len()).collect();
    let mut out = Vec::with_capacity(levels);
    for j in 0..levels {
        let last = j + 1 == levels;
        match rule {
            SplitRule::RemainingMean if last => {
                out.push(std::mem::take(&mut remaining));
            }
            SplitRule::RemainingMean => {
                if remaining.is_empty() {
                    out.push(Vec::new());
                    continue;
                }
                let mean = remaining.iter().map(|&c| alpha[c]).sum::<f64>() / remaining.len() as f64;
                let (low, high): (Vec<usize>, Vec<usize>) = remaining.iter().partition(|&&c| alpha[c] <= mean);
                if high.is_empty() {
                    out.push(Vec::new());
                } else {
                    out.push(low);
                    remaining = high;
                }
            }
            SplitRule::AsPrinted => {
                let mean = remaining.iter().map(|&c| alpha[c]).sum::<f64>() / k;
                let (low, high): (Vec<usize>, Vec<usize>) = remaining.iter().partition(|&&c| alpha[c] <= mean);
                out.push(low);
                remaining = high;
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub member_ids: Vec<String>,
    /// Bank indices of the members.
    pub members: Vec<usize>,
    /// Elementwise mean of the members' trajectories, `[n, H_u]`; zeros when empty.
    pub trajectory: Array,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportancePyramid {
    pub query_id: String,
    /// Bottom (least related) first; the last level is the apex.
    pub levels: Vec<Level>,
    /// Initial level weights `j / L`.
    pub weights: Vec<f64>,
}

impl ImportancePyramid {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Keeps only level `j`, as a one-level pyramid with weight 1.
    pub fn single_level(&self, j: usize) -> ImportancePyramid {
        ImportancePyramid { query_id: self.query_id.clone(), levels: vec![self.levels[j].clone()], weights: vec![1.0] }
    }
}

pub fn level_weights(levels: usize) -> Vec<f64> {
    (1..=levels).map(|j| j as f64 / levels as f64).collect()
}

fn mean_trajectory(bank: &TrajectoryBank, members: &[usize]) -> Array {
    let (n, h) = (bank.length(), bank.latent_dim);
    let mut out = vec![0.0; n * h];
    for &c in members {
        for (o, v) in out.iter_mut().zip(bank.trajectory(c)) {
            *o += v;
        }
    }
    if !members.is_empty() {
        out.iter_mut().for_each(|o| *o /= members.len() as f64);
    }
    Array::new(vec![n, h], out).expect("n·h values")
}

/// Sorts the candidates of one query (`α` row over the bank, `cand` bank indices) into levels.
pub fn pyramidal_sort(
    query_id: &str,
    alpha_row: &[f64],
    cand: &[usize],
    bank: &TrajectoryBank,
    levels: usize,
    rule: SplitRule,
) -> Result<ImportancePyramid> {
    if alpha_row.len() != bank.len() {
        return Err(Error::shape("pyramidal_sort", format!("{} weights for {} bank entries", alpha_row.len(), bank.len())));
    }
    let a: Vec<f64> = cand.iter().map(|&c| alpha_row[c]).collect();
    let groups = sort_levels(&a, levels, rule)?;
    let levels_out = groups
        .into_iter()
        .map(|g| {
            let mut members: Vec<usize> = g.into_iter().map(|p| cand[p]).collect();
            members.sort_unstable();
            Level {
                member_ids: members.iter().map(|&c| bank.sample_ids[c].clone()).collect(),
                trajectory: mean_trajectory(bank, &members),
                members,
            }
        })
        .collect();
    Ok(ImportancePyramid { query_id: query_id.to_string(), levels: levels_out, weights: level_weights(levels) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PyramidSet {
    pub format_version: u32,
    #[serde(rename = "L")]
    pub levels: usize,
    pub rule: SplitRule,
    pub bank_ids: Vec<String>,
    pub pyramids: Vec<ImportancePyramid>,
}

impl PyramidSet {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn get(&self, k: usize) -> &ImportancePyramid {
        &self.pyramids[k]
    }

    pub fn len(&self) -> usize {
        self.pyramids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pyramids.is_empty()
    }

    /// Every pyramid reduced to its level `pick(L)` alone.
    pub fn single_level(&self, pick: impl Fn(usize) -> usize) -> PyramidSet {
        PyramidSet {
            levels: 1,
            pyramids: self.pyramids.iter().map(|p| p.single_level(pick(p.num_levels()))).collect(),
            ..self.clone()
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|_| Error::MissingArtifact(format!("missing pyramid file `{}`", path.display())))?;
        let set: Self = serde_json::from_str(&text)?;
        if set.format_version != Self::FORMAT_VERSION {
            return Err(Error::FormatVersion { found: set.format_version, expected: Self::FORMAT_VERSION });
        }
        Ok(set)
    }
}

/// One pyramid per query of `batch`.
pub fn build_pyramids(
    batch: &TimeSeriesBatch,
    bank: &TrajectoryBank,
    emb: &EmbeddingParams,
    store: &ParameterStore,
    levels: usize,
    rule: SplitRule,
) -> Result<PyramidSet> {
    let att = attention_scores(emb, store, batch, bank)?;
    let pyramids = (0..batch.samples())
        .into_par_iter()
        .map(|q| {
            pyramidal_sort(&att.query_ids[q], att.row(q), &att.candidates(q), bank, levels, rule).map_err(|e| e.in_sample(q))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PyramidSet {
        format_version: PyramidSet::FORMAT_VERSION,
        levels,
        rule,
        bank_ids: bank.sample_ids.clone(),
        pyramids,
    })
}
