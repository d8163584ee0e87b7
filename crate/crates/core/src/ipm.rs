//! Iterative parameter mixing, with machines simulated by threads.
//!
//! Every epoch the global weights are sent to each machine, each machine
//! runs one AdaGrad pass over its own shard, and the weights are averaged
//! back in machine order. The two variants differ only in the AdaGrad
//! accumulators:
//!
//! * [`IpmVariant::Naive`]: each machine keeps its own `G_i` for the whole
//!   run; accumulators are never exchanged.
//! * [`IpmVariant::Improved`]: `G` is broadcast with `w` every epoch and the
//!   squared-gradient mass every machine added is summed back into it.
//!
//! Network cost is not simulated. Wall-clock speed-up is modelled by
//! [`speedup`] from epoch counts alone.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::block_sizes;
use crate::error::{Error, Result};
use crate::model::{FeatureVector, FfmModel};
use crate::trainer::{early_stopping, sequential_epoch, shuffled_order, TrainReport, DEFAULT_MAX_EPOCHS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IpmVariant {
    Naive,
    Improved,
}

impl IpmVariant {
    pub fn name(self) -> &'static str {
        match self {
            IpmVariant::Naive => "naive",
            IpmVariant::Improved => "improved",
        }
    }
}

impl std::str::FromStr for IpmVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(IpmVariant::Naive),
            "improved" => Ok(IpmVariant::Improved),
            other => Err(Error::config(format!("unknown IPM variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IpmConfig {
    pub machines: usize,
    pub variant: IpmVariant,
    /// Replaces the seed model's learning rate.
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// OS threads used to run the machines. Does not affect the result.
    pub threads: usize,
    /// Keep a copy of the global model after every epoch.
    pub keep_history: bool,
}

impl IpmConfig {
    pub fn new(machines: usize, variant: IpmVariant, learning_rate: f64) -> Self {
        IpmConfig {
            machines,
            variant,
            learning_rate,
            max_epochs: DEFAULT_MAX_EPOCHS,
            threads: 1,
            keep_history: false,
        }
    }

    pub fn with_max_epochs(mut self, max_epochs: usize) -> Self {
        self.max_epochs = max_epochs;
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }

    pub fn with_history(mut self) -> Self {
        self.keep_history = true;
        self
    }
}

#[derive(Debug, Clone)]
pub struct IpmReport {
    pub config: IpmConfig,
    pub train: TrainReport,
    /// Global model after each epoch, when requested.
    pub history: Vec<FfmModel>,
}

/// Contiguous shards whose sizes differ by at most one example.
pub fn shard_ranges(n: usize, machines: usize) -> Vec<std::ops::Range<usize>> {
    let mut start = 0;
    block_sizes(n, machines)
        .into_iter()
        .map(|len| {
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Runs each machine's local epoch, `threads` machines at a time.
fn run_machines(
    locals: &mut [FfmModel],
    shards: &[&[FeatureVector]],
    seed: u64,
    epoch: usize,
    threads: usize,
) -> Vec<Result<f64>> {
    let per_thread = locals.len().div_ceil(threads.max(1));
    let run = |i: usize, m: &mut FfmModel| {
        let order = shuffled_order(shards[i].len(), seed, epoch, i);
        sequential_epoch(m, shards[i], &order)
    };
    if per_thread >= locals.len() {
        return locals.iter_mut().enumerate().map(|(i, m)| run(i, m)).collect();
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = locals
            .chunks_mut(per_thread)
            .enumerate()
            .map(|(c, group)| {
                let run = &run;
                s.spawn(move || {
                    group
                        .iter_mut()
                        .enumerate()
                        .map(|(j, m)| run(c * per_thread + j, m))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("machine thread panicked")).collect()
    })
}

/// Trains with `config.machines` simulated machines and early stopping on
/// the averaged model's validation loss.
///
/// Machine `i` owns the `i`-th contiguous shard of `train` and shuffles it
/// each epoch with its own stream. With one machine the run is bit-identical
/// to [`crate::trainer::train`].
pub fn ipm_train(config: &IpmConfig, seed: FfmModel, train: &[FeatureVector], val: &[FeatureVector]) -> Result<IpmReport> {
    let k = config.machines;
    if k < 1 {
        return Err(Error::config("at least one machine is required"));
    }
    if train.len() < k {
        return Err(Error::config(format!("{} examples cannot fill {k} shards", train.len())));
    }
    let mut seed = seed;
    seed.set_learning_rate(config.learning_rate)?;
    for x in train {
        x.validate(seed.config().num_fields)?;
    }
    let shards: Vec<&[FeatureVector]> = shard_ranges(train.len(), k).into_iter().map(|r| &train[r]).collect();
    let rng_seed = seed.config().seed;
    let weight: f64 = train.iter().map(|x| x.weight).sum();
    // per-machine accumulators, only carried across epochs by the naive variant
    let mut machine_accum: Vec<Vec<f64>> = vec![seed.accum().to_vec(); k];
    let mut history = Vec::new();

    let report = early_stopping(seed, val, config.max_epochs, config.threads.max(1), weight, |global, epoch| {
        let mut locals: Vec<FfmModel> = (0..k)
            .map(|i| {
                let mut m = global.clone();
                if config.variant == IpmVariant::Naive {
                    m.accum_mut().copy_from_slice(&machine_accum[i]);
                }
                m
            })
            .collect();

        let losses = run_machines(&mut locals, &shards, rng_seed, epoch, config.threads);
        let mut loss = 0.0;
        for l in losses {
            loss += l?;
        }

        let scale = 1.0 / k as f64;
        let w = global.weights_mut();
        w.copy_from_slice(locals[0].weights());
        for m in &locals[1..] {
            for (a, b) in w.iter_mut().zip(m.weights()) {
                *a += b;
            }
        }
        if k > 1 {
            w.iter_mut().for_each(|a| *a *= scale);
        }

        match config.variant {
            IpmVariant::Improved => {
                // G <- G_1 + sum_{i>1} (G_i - G): every machine's squared-gradient mass, counted once
                let before = global.accum().to_vec();
                let g = global.accum_mut();
                g.copy_from_slice(locals[0].accum());
                for m in &locals[1..] {
                    for ((a, b), g0) in g.iter_mut().zip(m.accum()).zip(&before) {
                        *a += b - g0;
                    }
                }
            }
            IpmVariant::Naive => {
                for (store, m) in machine_accum.iter_mut().zip(&locals) {
                    store.copy_from_slice(m.accum());
                }
                // the global accumulator is only informational here: the machine mean
                let g = global.accum_mut();
                g.copy_from_slice(&machine_accum[0]);
                for store in &machine_accum[1..] {
                    for (a, b) in g.iter_mut().zip(store) {
                        *a += b;
                    }
                }
                if k > 1 {
                    g.iter_mut().for_each(|a| *a *= scale);
                }
            }
        }
        if config.keep_history {
            let mut snapshot = global.clone();
            snapshot.set_trained_epochs(global.trained_epochs() + 1);
            history.push(snapshot);
        }
        Ok(loss)
    })?;

    Ok(IpmReport {
        config: *config,
        train: report,
        history,
    })
}

/// Modelled speed-up of a `machines`-way run over a single machine:
/// `machines * epochs_single / epochs_multi`.
pub fn speedup(machines: usize, epochs_multi: usize, epochs_single: usize) -> Result<f64> {
    if epochs_multi == 0 || epochs_single == 0 {
        return Err(Error::config("epoch counts must be positive"));
    }
    Ok(machines as f64 * epochs_single as f64 / epochs_multi as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub machines: usize,
    pub variant: IpmVariant,
    pub eta: f64,
    pub epochs_to_best: usize,
    pub best_logloss: f64,
    /// Against the one-machine row with the same η (or any one-machine row).
    pub speedup_vs_single: Option<f64>,
}

/// One IPM run per config, all from the same seed model.
pub fn sweep(configs: &[IpmConfig], seed: &FfmModel, train: &[FeatureVector], val: &[FeatureVector]) -> Result<Vec<SweepRow>> {
    if configs.is_empty() {
        return Err(Error::config("sweep needs at least one configuration"));
    }
    let mut rows = Vec::with_capacity(configs.len());
    for cfg in configs {
        let r = ipm_train(cfg, seed.clone(), train, val)?;
        rows.push(SweepRow {
            machines: cfg.machines,
            variant: cfg.variant,
            eta: cfg.learning_rate,
            epochs_to_best: r.train.epochs_to_best(),
            best_logloss: r.train.best_val_loss(),
            speedup_vs_single: None,
        });
    }
    let singles: Vec<(f64, usize)> = rows.iter().filter(|r| r.machines == 1).map(|r| (r.eta, r.epochs_to_best)).collect();
    for row in &mut rows {
        let base = singles
            .iter()
            .find(|(eta, _)| *eta == row.eta)
            .or(singles.first())
            .map(|&(_, e)| e);
        row.speedup_vs_single = base.and_then(|e| speedup(row.machines, row.epochs_to_best, e).ok());
    }
    Ok(rows)
}

/// `machines,variant,eta,epochs_to_best,best_logloss,speedup_vs_single`
pub fn write_sweep_csv(rows: &[SweepRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["machines", "variant", "eta", "epochs_to_best", "best_logloss", "speedup_vs_single"])?;
    for r in rows {
        w.write_record([
            r.machines.to_string(),
            r.variant.name().to_string(),
            r.eta.to_string(),
            r.epochs_to_best.to_string(),
            r.best_logloss.to_string(),
            r.speedup_vs_single.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_sweep_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    write_sweep_csv(rows, std::fs::File::create(path)?)
}
