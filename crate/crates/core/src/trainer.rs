//! Single-node epoch loop with early stopping.
//!
//! Training stops at the first epoch whose validation loss is larger than
//! the previous epoch's. The model from the epoch before that ("mature") is
//! the one to predict with, and the one before it ("pre-mature") is the one
//! to seed the next run with.

use std::io::Write;
use std::path::Path;
use std::sync::atomic::AtomicU64;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::hash::mix64;
use crate::model::kernel::{self, AtomicTables, Scratch};
use crate::model::{log_loss, FeatureVector, FfmModel};

pub const DEFAULT_MAX_EPOCHS: usize = 200;

const EVAL_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub max_epochs: usize,
    pub threads: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            max_epochs: DEFAULT_MAX_EPOCHS,
            threads: 1,
        }
    }
}

impl TrainOptions {
    pub fn new(max_epochs: usize) -> Self {
        TrainOptions {
            max_epochs,
            threads: 1,
        }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }
}

/// Weighted log loss of a model over a data set.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossSummary {
    /// Weighted sum of per-example log losses.
    pub total: f64,
    pub weight_sum: f64,
    pub count: usize,
    /// Weighted number of positive labels.
    pub positives: f64,
}

impl LossSummary {
    pub fn mean(&self) -> f64 {
        self.total / self.weight_sum
    }

    /// Weighted positive rate, the best constant prediction on this set.
    pub fn base_rate(&self) -> f64 {
        self.positives / self.weight_sum
    }

    fn merge(&mut self, other: &LossSummary) {
        self.total += other.total;
        self.weight_sum += other.weight_sum;
        self.count += other.count;
        self.positives += other.positives;
    }
}

fn loss_of_chunk(model: &FfmModel, chunk: &[FeatureVector]) -> Result<LossSummary> {
    let mut s = LossSummary::default();
    for x in chunk {
        x.validate(model.config().num_fields)?;
        let p = kernel::sigmoid(model.raw_score_unchecked(x));
        s.total += x.weight * log_loss(p, x.label);
        s.weight_sum += x.weight;
        s.count += 1;
        if x.label {
            s.positives += x.weight;
        }
    }
    Ok(s)
}

/// Weighted log loss over `data`.
///
/// The sum is formed chunk by chunk in a fixed order, so the result does
/// not depend on `threads`.
pub fn evaluate_loss(model: &FfmModel, data: &[FeatureVector], threads: usize) -> Result<LossSummary> {
    if data.is_empty() {
        return Err(Error::config("cannot evaluate on an empty data set"));
    }
    let chunks: Vec<&[FeatureVector]> = data.chunks(EVAL_CHUNK).collect();
    let partials: Vec<Result<LossSummary>> = if threads <= 1 || chunks.len() == 1 {
        chunks.iter().map(|c| loss_of_chunk(model, c)).collect()
    } else {
        let per_thread = chunks.len().div_ceil(threads);
        std::thread::scope(|s| {
            let handles: Vec<_> = chunks
                .chunks(per_thread)
                .map(|group| s.spawn(move || group.iter().map(|c| loss_of_chunk(model, c)).collect::<Vec<_>>()))
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("evaluation worker panicked")).collect()
        })
    };
    let mut total = LossSummary::default();
    for p in partials {
        total.merge(&p?);
    }
    Ok(total)
}

/// Seed of the shuffle used by `stream` during `epoch`.
pub(crate) fn shuffle_seed(seed: u64, epoch: usize, stream: usize) -> u64 {
    mix64(mix64(seed ^ 0x7368_7566_666c_6521) ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
        ^ (stream as u64).wrapping_mul(0xd1b5_4a32_d192_ed03)
}

pub(crate) fn shuffled_order(n: usize, seed: u64, epoch: usize, stream: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed(seed, epoch, stream));
    order.shuffle(&mut rng);
    order
}

/// One sequential AdaGrad pass over `data` in the given order.
pub(crate) fn sequential_epoch(model: &mut FfmModel, data: &[FeatureVector], order: &[usize]) -> Result<f64> {
    let mut loss = 0.0;
    for (ordinal, &i) in order.iter().enumerate() {
        loss += model
            .sgd_step(&data[i])
            .map_err(|e| e.at_example(ordinal))?;
    }
    Ok(loss)
}

/// One pass with `threads` workers updating the shared tables without locks.
fn racy_epoch(model: &mut FfmModel, data: &[FeatureVector], order: &[usize], threads: usize) -> Result<f64> {
    for x in data {
        x.validate(model.config().num_fields)?;
    }
    let config = &model.config().clone();
    let to_atomic = |v: &[f64]| -> Vec<AtomicU64> { v.iter().map(|x| AtomicU64::new(x.to_bits())).collect() };
    let shared_w = to_atomic(model.weights());
    let shared_g = to_atomic(model.accum());
    let tables = AtomicTables {
        weights: &shared_w,
        accum: &shared_g,
    };
    let per_worker = order.len().div_ceil(threads).max(1);
    let results: Vec<Result<f64>> = std::thread::scope(|s| {
        let handles: Vec<_> = order
            .chunks(per_worker)
            .enumerate()
            .map(|(w, shard)| {
                let mut tables = tables;
                s.spawn(move || {
                    let mut scratch = Scratch::default();
                    let mut loss = 0.0;
                    for (j, &i) in shard.iter().enumerate() {
                        loss += kernel::step(config, &mut tables, &data[i], &mut scratch)
                            .map_err(|e| e.at_example(w * per_worker + j))?;
                    }
                    Ok(loss)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("training worker panicked")).collect()
    });
    let from_atomic = |v: Vec<AtomicU64>| -> Vec<f64> { v.into_iter().map(|a| f64::from_bits(a.into_inner())).collect() };
    model.replace_tables(from_atomic(shared_w), from_atomic(shared_g));
    results.into_iter().sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean weighted log loss accumulated while training the epoch.
    pub train_loss: f64,
    /// Mean weighted log loss on the validation set after the epoch.
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Validation loss of the seed model, before any epoch.
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochStats>,
    /// Last epoch run: the one whose loss went up, or the cap.
    pub stop_epoch: usize,
    /// True when stopping was triggered by a validation increase.
    pub stopped_early: bool,
    /// `w_{t-1}`: the model to predict with.
    pub mature_model: FfmModel,
    /// `w_{t-2}`: the model to seed the next run with.
    pub premature_model: FfmModel,
}

impl TrainReport {
    /// Epoch (1-based) with the smallest validation loss; 0 if the seed was best.
    pub fn epochs_to_best(&self) -> usize {
        let mut best = (0, self.initial_val_loss);
        for e in &self.epochs {
            if e.val_loss < best.1 {
                best = (e.epoch, e.val_loss);
            }
        }
        best.0
    }

    pub fn best_val_loss(&self) -> f64 {
        self.epochs
            .iter()
            .map(|e| e.val_loss)
            .fold(self.initial_val_loss, f64::min)
    }

    /// Number of the epoch that produced the mature model (0 = the seed).
    pub fn mature_epoch(&self) -> usize {
        if self.stopped_early {
            self.stop_epoch - 1
        } else {
            self.stop_epoch
        }
    }

    pub fn wall_time_per_epoch(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.seconds).collect()
    }

    pub fn total_seconds(&self) -> f64 {
        self.epochs.iter().map(|e| e.seconds).sum()
    }

    /// `epoch,train_ll,val_ll,seconds`
    pub fn write_progress_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "train_ll", "val_ll", "seconds"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.val_loss.to_string(),
                e.seconds.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_progress_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_progress_csv(std::fs::File::create(path)?)
    }
}

/// Early-stopping driver shared by the single-node trainer and the IPM
/// simulation. `run_epoch(model, t)` trains epoch `t` in place and returns
/// the summed training loss.
pub(crate) fn early_stopping<F>(
    seed: FfmModel,
    val: &[FeatureVector],
    max_epochs: usize,
    eval_threads: usize,
    train_weight: f64,
    mut run_epoch: F,
) -> Result<TrainReport>
where
    F: FnMut(&mut FfmModel, usize) -> Result<f64>,
{
    if max_epochs < 1 {
        return Err(Error::config("max_epochs must be at least 1"));
    }
    if val.is_empty() {
        return Err(Error::config("validation set is empty"));
    }
    let initial = evaluate_loss(&seed, val, eval_threads)?;
    let mut prev_loss = initial.total;
    let mut older = seed.clone();
    let mut prev = seed.clone();
    let mut current = seed;
    let mut epochs = Vec::new();

    for t in 1..=max_epochs {
        let started = Instant::now();
        let train_loss = run_epoch(&mut current, t).map_err(|e| e.at_epoch(t))?;
        current.set_trained_epochs(current.trained_epochs() + 1);
        let val_loss = evaluate_loss(&current, val, eval_threads)?;
        epochs.push(EpochStats {
            epoch: t,
            train_loss: train_loss / train_weight,
            val_loss: val_loss.mean(),
            seconds: started.elapsed().as_secs_f64(),
        });
        if val_loss.total > prev_loss {
            return Ok(TrainReport {
                initial_val_loss: initial.mean(),
                epochs,
                stop_epoch: t,
                stopped_early: true,
                mature_model: prev,
                premature_model: older,
            });
        }
        prev_loss = val_loss.total;
        older = std::mem::replace(&mut prev, current.clone());
    }
    Ok(TrainReport {
        initial_val_loss: initial.mean(),
        epochs,
        stop_epoch: max_epochs,
        stopped_early: false,
        mature_model: current,
        premature_model: older,
    })
}

/// Trains `model` on `train` with early stopping on `val`.
///
/// Each epoch visits the training set in a shuffle seeded by
/// `(config.seed, epoch)`. With `threads > 1` the shuffled order is cut into
/// one contiguous shard per worker and all workers update the shared tables
/// without synchronization; results are then only reproducible for
/// `threads == 1`.
pub fn train(model: FfmModel, train: &[FeatureVector], val: &[FeatureVector], opts: &TrainOptions) -> Result<TrainReport> {
    if train.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    let threads = opts.threads.max(1);
    let seed = model.config().seed;
    let weight: f64 = train.iter().map(|x| x.weight).sum();
    early_stopping(model, val, opts.max_epochs, threads, weight, |m, t| {
        let order = shuffled_order(train.len(), seed, t, 0);
        if threads == 1 {
            sequential_epoch(m, train, &order)
        } else {
            racy_epoch(m, train, &order, threads)
        }
    })
}
