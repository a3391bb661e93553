//! Minibatch Adam over per-sample tapes.
//!
//! Every sample in a minibatch records its own tape on a rayon worker; the
//! resulting gradients are summed in sample order, so a run is bit-identical
//! regardless of thread count.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffcore::{AdamConfig, Gradients, ParameterStore, Tape, Var};
use crate::error::{Error, Result};
use crate::seeding;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Seeds the per-epoch shuffling.
    pub seed: u64,
}

/// Mean per-sample loss of every epoch, measured before each update.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub epoch_losses: Vec<f64>,
}

impl LossCurve {
    pub fn first(&self) -> Option<f64> {
        self.epoch_losses.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }

    /// True when no epoch improved on the first one.
    pub fn never_decreased(&self) -> bool {
        match self.first() {
            Some(f) => self.epoch_losses.iter().skip(1).all(|l| *l >= f),
            None => false,
        }
    }
}

/// Loss of sample `index` during `epoch`, recorded on `tape`.
pub trait SampleLoss: Sync {
    fn loss(&self, tape: &mut Tape, store: &ParameterStore, index: usize, epoch: usize) -> Result<Var>;
}

impl<F> SampleLoss for F
where
    F: Fn(&mut Tape, &ParameterStore, usize, usize) -> Result<Var> + Sync,
{
    fn loss(&self, tape: &mut Tape, store: &ParameterStore, index: usize, epoch: usize) -> Result<Var> {
        self(tape, store, index, epoch)
    }
}

/// Loss value and parameter gradients of one sample.
pub fn sample_gradients(
    loss: &dyn SampleLoss,
    store: &ParameterStore,
    index: usize,
    epoch: usize,
) -> Result<(f64, Gradients)> {
    let mut tape = Tape::new();
    let l = loss.loss(&mut tape, store, index, epoch)?;
    let value = tape.data(l)[0];
    Ok((value, tape.backward(l)?.into_gradients()))
}

/// Trains `store` on samples `0..samples`.
pub fn train(store: &mut ParameterStore, samples: usize, opts: &TrainOptions, loss: &dyn SampleLoss) -> Result<LossCurve> {
    if samples == 0 {
        return Err(Error::usage("no training samples"));
    }
    if opts.batch_size == 0 {
        return Err(Error::usage("batch_size must be positive"));
    }
    let mut curve = LossCurve::default();
    for epoch in 0..opts.epochs {
        let mut order: Vec<usize> = (0..samples).collect();
        order.shuffle(&mut seeding::substream(opts.seed, "shuffle", epoch as u64));
        let mut total = 0.0;
        for batch in order.chunks(opts.batch_size) {
            let results: Vec<(f64, Gradients)> = batch
                .par_iter()
                .map(|&k| sample_gradients(loss, store, k, epoch).map_err(|e| e.in_sample(k)))
                .collect::<Result<_>>()?;
            let mut grads = Gradients::new();
            for (l, g) in &results {
                if !l.is_finite() {
                    return Err(Error::NonFinite { op: "loss" });
                }
                total += l;
                grads.add_assign(g);
            }
            grads.scale(1.0 / batch.len() as f64);
            store.zero_grads();
            store.accumulate(&grads);
            let step = store.step() + 1;
            store.adam_step(&opts.adam, step)?;
        }
        curve.epoch_losses.push(total / samples as f64);
    }
    Ok(curve)
}
