//! Rolling re-training with cold, naive and pre-mature seeding.
//!
//! A window of blocks slides forward one step at a time. At every step a
//! model is trained on the training blocks, early-stopped on the validation
//! block, and its mature snapshot is scored on the test block. The seeding
//! mode decides where each step starts from:
//!
//! * [`Seeding::Cold`]: a fresh random model every step.
//! * [`Seeding::Naive`]: the previous step's mature model.
//! * [`Seeding::Premature`]: the previous step's pre-mature model, one epoch
//!   short of the mature one.
//!
//! The first step always starts cold and trains on the full window.
//! AdaGrad accumulators travel with the seeded weights unless
//! `reset_adagrad` is set.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{rolling_steps, BlockedDataset, RollingStep, RollingWindow};
use crate::error::{Error, Result};
use crate::metrics::{bootstrap_ci, nll, score_examples, BootstrapConfig};
use crate::model::{FfmModel, ModelConfig};
use crate::trainer::{evaluate_loss, train, TrainOptions, TrainReport, DEFAULT_MAX_EPOCHS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Seeding {
    Cold,
    Naive,
    Premature,
}

impl Seeding {
    pub fn name(self) -> &'static str {
        match self {
            Seeding::Cold => "cold",
            Seeding::Naive => "naive",
            Seeding::Premature => "premature",
        }
    }
}

impl std::str::FromStr for Seeding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cold" => Ok(Seeding::Cold),
            "naive" => Ok(Seeding::Naive),
            "premature" => Ok(Seeding::Premature),
            other => Err(Error::config(format!("unknown seeding {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RollingPlan {
    pub window: RollingWindow,
    pub seeding: Seeding,
    /// Steps after the first train on the most recent this-many blocks of the window.
    pub train_size_blocks: usize,
    /// Reset the seeded model's AdaGrad accumulators to 1.
    pub reset_adagrad: bool,
    pub max_epochs: usize,
    pub threads: usize,
}

impl RollingPlan {
    pub fn new(window: RollingWindow, seeding: Seeding) -> Self {
        RollingPlan {
            window,
            seeding,
            train_size_blocks: window.train_blocks,
            reset_adagrad: false,
            max_epochs: DEFAULT_MAX_EPOCHS,
            threads: 1,
        }
    }

    /// Naive seeding on one training block: train, validation and test tile
    /// the stream without overlap.
    pub fn online(window: RollingWindow) -> Self {
        RollingPlan::new(window, Seeding::Naive).with_train_size(1)
    }

    pub fn with_train_size(mut self, blocks: usize) -> Self {
        self.train_size_blocks = blocks;
        self
    }

    pub fn with_max_epochs(mut self, max_epochs: usize) -> Self {
        self.max_epochs = max_epochs;
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }

    pub fn with_reset_adagrad(mut self, reset: bool) -> Self {
        self.reset_adagrad = reset;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_size_blocks < 1 || self.train_size_blocks > self.window.train_blocks {
            return Err(Error::config(format!(
                "train_size_blocks must be in 1..={}, got {}",
                self.window.train_blocks, self.train_size_blocks
            )));
        }
        Ok(())
    }

    /// Short label such as `premature(4)`.
    pub fn label(&self) -> String {
        format!("{}({})", self.seeding.name(), self.train_size_blocks)
    }
}

impl fmt::Display for RollingPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub seeding: Seeding,
    pub train_blocks: usize,
    pub test_ll: f64,
    pub test_nll: f64,
    /// Epochs run, including the one that triggered the stop.
    pub epochs: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingReport {
    pub plan: RollingPlan,
    pub steps: Vec<StepRecord>,
}

impl RollingReport {
    pub fn total_epochs(&self) -> usize {
        self.steps.iter().map(|s| s.epochs).sum()
    }

    pub fn total_seconds(&self) -> f64 {
        self.steps.iter().map(|s| s.seconds).sum()
    }

    pub fn mean_seconds_per_epoch(&self) -> f64 {
        self.total_seconds() / self.total_epochs().max(1) as f64
    }

    pub fn test_lls(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.test_ll).collect()
    }
}

/// What a step started from and what it produced.
pub struct StepModels<'a> {
    pub step: &'a RollingStep,
    pub seed: &'a FfmModel,
    pub report: &'a TrainReport,
}

/// Trains and scores a single step from `seed` (a fresh model when `None`).
pub fn train_step(
    plan: &RollingPlan,
    blocked: &BlockedDataset,
    config: &ModelConfig,
    step: &RollingStep,
    seed: Option<&FfmModel>,
) -> Result<(StepRecord, FfmModel, TrainReport)> {
    let mut model = match seed {
        Some(m) => m.clone(),
        None => FfmModel::new(config.clone())?,
    };
    if seed.is_some() && plan.reset_adagrad {
        model.reset_accum();
    }
    let train_range = match seed {
        None if step.index == 0 => step.train.clone(),
        _ => step.train.end - plan.train_size_blocks..step.train.end,
    };
    let opts = TrainOptions::new(plan.max_epochs).with_threads(plan.threads);
    let report = train(model.clone(), blocked.range(train_range.clone()), blocked.range(step.val.clone()), &opts)?;
    let test = blocked.range(step.test.clone());
    let loss = evaluate_loss(&report.mature_model, test, plan.threads)?;
    let record = StepRecord {
        step: step.index,
        seeding: plan.seeding,
        train_blocks: train_range.len(),
        test_ll: loss.mean(),
        test_nll: nll(&score_examples(&report.mature_model, test)?)?,
        epochs: report.epochs.len(),
        seconds: report.total_seconds(),
    };
    Ok((record, model, report))
}

/// Runs every step of `plan`, calling `observe` after each one.
pub fn run_rolling_with<F>(plan: &RollingPlan, blocked: &BlockedDataset, config: &ModelConfig, mut observe: F) -> Result<RollingReport>
where
    F: FnMut(StepModels<'_>),
{
    plan.validate()?;
    config.validate()?;
    let steps = rolling_steps(blocked.n_blocks(), plan.window)?;
    let mut carried: Option<FfmModel> = None;
    let mut records = Vec::with_capacity(steps.len());
    for step in &steps {
        let seed = match plan.seeding {
            Seeding::Cold => None,
            _ => carried.as_ref(),
        };
        let (record, seed_model, report) = train_step(plan, blocked, config, step, seed).map_err(|e| e.at_step(step.index))?;
        observe(StepModels {
            step,
            seed: &seed_model,
            report: &report,
        });
        carried = match plan.seeding {
            Seeding::Cold => None,
            Seeding::Naive => Some(report.mature_model),
            Seeding::Premature => Some(report.premature_model),
        };
        records.push(record);
    }
    Ok(RollingReport {
        plan: *plan,
        steps: records,
    })
}

pub fn run_rolling(plan: &RollingPlan, blocked: &BlockedDataset, config: &ModelConfig) -> Result<RollingReport> {
    run_rolling_with(plan, blocked, config, |_| {})
}

/// Per-step test-loss differences of one plan against the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDelta {
    pub plan: String,
    /// `LL(plan) - LL(baseline)` per step; negative is better.
    pub deltas: Vec<f64>,
    pub mean: f64,
    /// Bootstrap interval of the mean over steps; `None` with fewer than two steps.
    pub ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: RollingReport,
    pub reports: Vec<RollingReport>,
    pub deltas: Vec<PlanDelta>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Differences of already computed reports against `baseline`.
pub fn compare_reports(baseline: &RollingReport, reports: &[RollingReport], bootstrap: &BootstrapConfig) -> Result<Vec<PlanDelta>> {
    reports
        .iter()
        .map(|r| {
            if r.steps.len() != baseline.steps.len() {
                return Err(Error::Misaligned(format!(
                    "{} has {} steps, baseline has {}",
                    r.plan.label(),
                    r.steps.len(),
                    baseline.steps.len()
                )));
            }
            let deltas: Vec<f64> = r.steps.iter().zip(&baseline.steps).map(|(a, b)| a.test_ll - b.test_ll).collect();
            let ci = if deltas.len() >= 2 {
                Some(bootstrap_ci(&deltas, |s| Ok(mean(s)), bootstrap)?)
            } else {
                None
            };
            Ok(PlanDelta {
                plan: r.plan.label(),
                mean: mean(&deltas),
                deltas,
                ci,
            })
        })
        .collect()
}

/// Runs `baseline` and every plan, then compares them step by step.
pub fn compare_plans(baseline: &RollingPlan, plans: &[RollingPlan], blocked: &BlockedDataset, config: &ModelConfig) -> Result<Comparison> {
    for p in plans {
        if p.window != baseline.window {
            return Err(Error::Misaligned(format!("{} uses a different window than the baseline", p.label())));
        }
    }
    let base = run_rolling(baseline, blocked, config)?;
    let reports = plans
        .iter()
        .map(|p| run_rolling(p, blocked, config))
        .collect::<Result<Vec<_>>>()?;
    let deltas = compare_reports(&base, &reports, &BootstrapConfig::default())?;
    Ok(Comparison {
        baseline: base,
        reports,
        deltas,
    })
}

/// `step,seeding,train_blocks,test_ll,test_nll,epochs,seconds`, one block of rows per report.
pub fn write_rolling_csv<'a>(reports: impl IntoIterator<Item = &'a RollingReport>, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "seeding", "train_blocks", "test_ll", "test_nll", "epochs", "seconds"])?;
    for r in reports {
        for s in &r.steps {
            w.write_record([
                s.step.to_string(),
                s.seeding.name().to_string(),
                s.train_blocks.to_string(),
                s.test_ll.to_string(),
                s.test_nll.to_string(),
                s.epochs.to_string(),
                s.seconds.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `step,plan,test_ll,baseline_ll,delta_ll`
pub fn write_delta_csv(cmp: &Comparison, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "plan", "test_ll", "baseline_ll", "delta_ll"])?;
    for (r, d) in cmp.reports.iter().zip(&cmp.deltas) {
        for ((s, b), delta) in r.steps.iter().zip(&cmp.baseline.steps).zip(&d.deltas) {
            w.write_record([
                s.step.to_string(),
                d.plan.clone(),
                s.test_ll.to_string(),
                b.test_ll.to_string(),
                delta.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_comparison(cmp: &Comparison, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    write_rolling_csv(std::iter::once(&cmp.baseline).chain(&cmp.reports), std::fs::File::create(dir.join("rolling_report.csv"))?)?;
    write_delta_csv(cmp, std::fs::File::create(dir.join("delta_vs_baseline.csv"))?)
}
